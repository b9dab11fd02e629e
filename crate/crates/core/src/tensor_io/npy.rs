use std::io::{self, Read, Write};

use super::Tensor3;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

fn stream_err(e: io::Error) -> Error {
    Error::io("<stream>", e)
}

/// Reads an NPY v1.0 stream holding a rank-3 little-endian `float32` array.
pub fn read_npy<R: Read>(reader: &mut R) -> Result<Tensor3> {
    let mut preamble = [0u8; 10];
    reader
        .read_exact(&mut preamble)
        .map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => {
                Error::MalformedHeader("file shorter than preamble".into())
            }
            _ => stream_err(e),
        })?;
    if &preamble[..6] != MAGIC {
        return Err(Error::MalformedHeader("bad magic string".into()));
    }
    if preamble[6..8] != [1, 0] {
        return Err(Error::MalformedHeader(format!(
            "unsupported format version {}.{}",
            preamble[6], preamble[7]
        )));
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut header = vec![0u8; header_len];
    reader.read_exact(&mut header).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::MalformedHeader("truncated header".into()),
        _ => stream_err(e),
    })?;
    let header = std::str::from_utf8(&header)
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    let dict = HeaderDict::parse(header)?;

    if dict.descr != "<f4" {
        return Err(Error::UnsupportedDtype(dict.descr));
    }
    if dict.fortran_order {
        return Err(Error::MalformedHeader(
            "fortran_order arrays are not supported".into(),
        ));
    }
    let shape: [usize; 3] = dict.shape.as_slice().try_into().map_err(|_| {
        Error::MalformedHeader(format!("expected rank 3, got shape {:?}", dict.shape))
    })?;

    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::MalformedHeader(format!("shape {shape:?} overflows")))?;
    let mut payload = Vec::with_capacity(n);
    reader
        .take(n as u64)
        .read_to_end(&mut payload)
        .map_err(stream_err)?;
    if payload.len() != n {
        return Err(Error::InvalidTensor(format!(
            "payload truncated: expected {n} bytes, found {}",
            payload.len()
        )));
    }
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(stream_err)? != 0 {
        return Err(Error::InvalidTensor("trailing bytes after payload".into()));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Tensor3::new(shape, data)
}

/// Writes `tensor` as an NPY v1.0 stream (`<f4`, C order).
pub fn write_npy<W: Write>(writer: &mut W, tensor: &Tensor3) -> io::Result<()> {
    let [a, b, c] = tensor.shape();
    let mut header =
        format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({a}, {b}, {c}), }}");
    // magic + version + length + header + '\n' must be a multiple of ALIGN
    let unpadded = MAGIC.len() + 2 + 2 + header.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    header.extend(std::iter::repeat_n(' ', pad));
    header.push('\n');

    writer.write_all(MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&(header.len() as u16).to_le_bytes())?;
    writer.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(tensor.data().len() * 4);
    for v in tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&buf)
}

#[derive(Debug, PartialEq)]
struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

#[derive(Debug, PartialEq)]
enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Minimal parser for the python dict literal stored in the header.
struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn error(&self, what: &str) -> Error {
        Error::MalformedHeader(format!("{what} at byte {}", self.pos))
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.error("expected string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(self.error("unterminated string"));
        }
        let out = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(out)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.s[start..self.pos]
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Value::Str),
            Some(b'(') => {
                self.pos += 1;
                let mut dims = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    let w = self.word();
                    let text = std::str::from_utf8(w).unwrap_or_default();
                    let dim = text
                        .parse::<usize>()
                        .map_err(|_| self.error(&format!("bad dimension {text:?}")))?;
                    dims.push(dim);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.error("expected ',' or ')' in shape")),
                    }
                }
                Ok(Value::Tuple(dims))
            }
            _ => match self.word() {
                b"True" => Ok(Value::Bool(true)),
                b"False" => Ok(Value::Bool(false)),
                _ => Err(self.error("unrecognized value")),
            },
        }
    }
}

impl HeaderDict {
    fn parse(text: &str) -> Result<Self> {
        let mut cur = Cursor {
            s: text.as_bytes(),
            pos: 0,
        };
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        cur.expect(b'{')?;
        loop {
            if cur.peek() == Some(b'}') {
                cur.pos += 1;
                break;
            }
            let key = cur.string()?;
            cur.expect(b':')?;
            match (key.as_str(), cur.value()?) {
                ("descr", Value::Str(s)) => descr = Some(s),
                ("fortran_order", Value::Bool(b)) => fortran = Some(b),
                ("shape", Value::Tuple(t)) => shape = Some(t),
                (k, v) => {
                    return Err(Error::MalformedHeader(format!(
                        "unexpected entry {k:?}: {v:?}"
                    )))
                }
            }
            match cur.peek() {
                Some(b',') => cur.pos += 1,
                Some(b'}') => {}
                _ => return Err(cur.error("expected ',' or '}'")),
            }
        }
        if cur.s[cur.pos..].iter().any(|b| !b.is_ascii_whitespace()) {
            return Err(cur.error("trailing characters after dict"));
        }
        let missing = |k: &str| Error::MalformedHeader(format!("missing key {k:?}"));
        Ok(Self {
            descr: descr.ok_or_else(|| missing("descr"))?,
            fortran_order: fortran.ok_or_else(|| missing("fortran_order"))?,
            shape: shape.ok_or_else(|| missing("shape"))?,
        })
    }
}

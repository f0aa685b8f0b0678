//! Raw tensor framing shared with the reconstruction service.
//!
//! Layout (all little-endian):
//!
//! | bytes | field                                     |
//! |-------|-------------------------------------------|
//! | 4     | magic, `RGDA` (5 channels) or `RGB0` (3)  |
//! | 4     | width (u32)                               |
//! | 4     | height (u32)                              |
//! | 4     | channel count (u32)                       |
//! | ...   | f32 payload, plane-major, rows in order   |

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::frame::{ColorImage, FrameRGBDA};

pub const MAGIC_RGBDA: [u8; 4] = *b"RGDA";
pub const MAGIC_RGB: [u8; 4] = *b"RGB0";
pub const HEADER_LEN: usize = 16;

/// Refuse headers describing more than this many floats (4 GiB payload).
const MAX_ELEMENTS: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("short read: stream ended inside the {0}")]
    ShortRead(&'static str),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("magic {magic} requires {expected} channels, header says {actual}")]
    ChannelMismatch {
        magic: String,
        expected: u32,
        actual: u32,
    },
    #[error("frame {0}x{1}x{2} is too large")]
    TooLarge(u32, u32, u32),
    #[error("payload holds {actual} values, header needs {expected}")]
    PayloadSize { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorHeader {
    pub magic: [u8; 4],
    pub width: u32,
    pub height: u32,
    pub channels: u32,
}

impl TensorHeader {
    pub fn new(magic: [u8; 4], width: u32, height: u32) -> Result<Self, TensorError> {
        let channels = expected_channels(magic)?;
        Ok(Self {
            magic,
            width,
            height,
            channels,
        })
    }

    pub fn plane_len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn payload_len(&self) -> usize {
        self.plane_len() * self.channels as usize
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&self.magic);
        b[4..8].copy_from_slice(&self.width.to_le_bytes());
        b[8..12].copy_from_slice(&self.height.to_le_bytes());
        b[12..16].copy_from_slice(&self.channels.to_le_bytes());
        b
    }
}

fn expected_channels(magic: [u8; 4]) -> Result<u32, TensorError> {
    match &magic {
        b"RGDA" => Ok(5),
        b"RGB0" => Ok(3),
        _ => Err(TensorError::BadMagic(magic)),
    }
}

/// A fully materialized tensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensorFrame {
    pub header: TensorHeader,
    pub payload: Vec<f32>,
}

impl RawTensorFrame {
    pub fn new(header: TensorHeader, payload: Vec<f32>) -> Result<Self, TensorError> {
        expected_channels(header.magic)?;
        if payload.len() != header.payload_len() {
            return Err(TensorError::PayloadSize {
                expected: header.payload_len(),
                actual: payload.len(),
            });
        }
        Ok(Self { header, payload })
    }

    /// Packs a frame as R, G, B, depth (meters, 0 = empty), alpha planes.
    pub fn from_rgbda(frame: &FrameRGBDA) -> Self {
        let header = TensorHeader::new(MAGIC_RGBDA, frame.width as u32, frame.height as u32)
            .expect("RGDA is a known magic");
        let mut payload = Vec::with_capacity(header.payload_len());
        for ch in 0..5 {
            payload.extend((0..frame.pixel_count()).map(|i| rgbda_value(frame, ch, i)));
        }
        Self { header, payload }
    }

    pub fn from_color(image: &ColorImage) -> Self {
        let header = TensorHeader::new(MAGIC_RGB, image.width as u32, image.height as u32)
            .expect("RGB0 is a known magic");
        let mut payload = Vec::with_capacity(header.payload_len());
        for ch in 0..3 {
            payload.extend(image.data.iter().map(|p| p[ch]));
        }
        Self { header, payload }
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.header.plane_len();
        &self.payload[channel * n..(channel + 1) * n]
    }

    /// Interprets an `RGB0` frame as a color image.
    pub fn to_color(&self) -> Result<ColorImage, TensorError> {
        if self.header.magic != MAGIC_RGB {
            return Err(TensorError::BadMagic(self.header.magic));
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        Ok(ColorImage {
            width: self.header.width as usize,
            height: self.header.height as usize,
            data: (0..self.header.plane_len())
                .map(|i| [r[i], g[i], b[i]])
                .collect(),
        })
    }
}

#[inline]
fn rgbda_value(frame: &FrameRGBDA, channel: usize, i: usize) -> f32 {
    match channel {
        0..=2 => frame.rgb[i][channel],
        3 => frame.depth[i],
        _ => f32::from(frame.alpha[i]),
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), TensorError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TensorError::ShortRead(what),
        _ => TensorError::Io(e),
    })
}

pub fn read_header<R: Read>(r: &mut R) -> Result<TensorHeader, TensorError> {
    let mut b = [0u8; HEADER_LEN];
    read_full(r, &mut b[..4], "magic")?;
    let magic = [b[0], b[1], b[2], b[3]];
    let expected = expected_channels(magic)?;
    read_full(r, &mut b[4..], "header")?;
    let word = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    let (width, height, channels) = (word(4), word(8), word(12));
    if channels != expected {
        return Err(TensorError::ChannelMismatch {
            magic: String::from_utf8_lossy(&magic).into_owned(),
            expected,
            actual: channels,
        });
    }
    if u64::from(width) * u64::from(height) * u64::from(channels) > MAX_ELEMENTS {
        return Err(TensorError::TooLarge(width, height, channels));
    }
    Ok(TensorHeader {
        magic,
        width,
        height,
        channels,
    })
}

/// Streams a tensor payload one row at a time after the header.
pub struct TensorReader<R> {
    inner: R,
    header: TensorHeader,
    rows_read: usize,
    bytes: Vec<u8>,
}

impl<R: Read> TensorReader<R> {
    pub fn new(mut inner: R) -> Result<Self, TensorError> {
        let header = read_header(&mut inner)?;
        Ok(Self {
            bytes: vec![0u8; header.width as usize * 4],
            inner,
            header,
            rows_read: 0,
        })
    }

    pub fn header(&self) -> TensorHeader {
        self.header
    }

    /// Decodes the next row into `out` (length = width) and returns its
    /// `(channel, row)` position, or `None` once the payload is consumed.
    pub fn read_row(&mut self, out: &mut [f32]) -> Result<Option<(usize, usize)>, TensorError> {
        let h = self.header.height as usize;
        if self.rows_read == h * self.header.channels as usize {
            return Ok(None);
        }
        assert_eq!(out.len(), self.header.width as usize);
        read_full(&mut self.inner, &mut self.bytes, "payload")?;
        for (v, b) in out.iter_mut().zip(self.bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        let pos = (self.rows_read / h, self.rows_read % h);
        self.rows_read += 1;
        Ok(Some(pos))
    }
}

pub fn read_raw_tensor<R: Read>(r: R) -> Result<RawTensorFrame, TensorError> {
    let mut reader = TensorReader::new(r)?;
    let header = reader.header();
    let w = header.width as usize;
    let mut payload = vec![0f32; header.payload_len()];
    if w > 0 {
        for row in payload.chunks_mut(w) {
            reader.read_row(row)?;
        }
    }
    Ok(RawTensorFrame { header, payload })
}

/// Writes a header followed by values produced one row at a time, so large
/// frames never need a second full-size buffer.
fn write_rows<W: Write>(
    w: &mut W,
    header: TensorHeader,
    mut value: impl FnMut(usize, usize) -> f32,
) -> io::Result<()> {
    w.write_all(&header.to_bytes())?;
    let width = header.width as usize;
    let mut row = Vec::with_capacity(width * 4);
    for ch in 0..header.channels as usize {
        for y in 0..header.height as usize {
            row.clear();
            for x in 0..width {
                row.extend_from_slice(&value(ch, y * width + x).to_le_bytes());
            }
            w.write_all(&row)?;
        }
    }
    Ok(())
}

pub fn write_raw_tensor<W: Write>(w: &mut W, frame: &RawTensorFrame) -> io::Result<()> {
    let n = frame.header.plane_len();
    write_rows(w, frame.header, |ch, i| frame.payload[ch * n + i])
}

/// Streams an RGBDA frame directly from its channel buffers.
pub fn write_rgbda_tensor<W: Write>(w: &mut W, frame: &FrameRGBDA) -> io::Result<()> {
    let header = TensorHeader::new(MAGIC_RGBDA, frame.width as u32, frame.height as u32)
        .expect("RGDA is a known magic");
    write_rows(w, header, |ch, i| rgbda_value(frame, ch, i))
}

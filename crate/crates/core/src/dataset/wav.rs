//! Minimal RIFF/WAVE codec: PCM-16, PCM-24 and IEEE float-32, mono or stereo.

use std::path::Path;

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::signal::AudioClip;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub bit_depth: u16,
    /// Frames per channel.
    pub n_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Pcm16,
    Pcm24,
    Float32,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(decode_err(self.pos, format!("truncated {what}"))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn decode_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Decode { offset, msg: msg.into() }
}

struct Format {
    encoding: Encoding,
    channels: u16,
    sample_rate_hz: u32,
    block_align: u16,
    bits: u16,
}

fn parse_fmt(body: &[u8], offset: usize) -> Result<Format> {
    let mut r = Reader { bytes: body, pos: 0 };
    let at = |r: &Reader| offset + r.pos;
    let tag = r.u16("fmt chunk")?;
    let channels = r.u16("fmt chunk")?;
    let sample_rate_hz = r.u32("fmt chunk")?;
    let _byte_rate = r.u32("fmt chunk")?;
    let block_align = r.u16("fmt chunk")?;
    let bits = r.u16("fmt chunk")?;
    let tag = if tag == FORMAT_EXTENSIBLE {
        // cbSize, valid bits, channel mask, then the sub-format GUID whose
        // first two bytes carry the real format tag.
        let ext_at = at(&r);
        let _cb = r.u16("extensible fmt").map_err(|_| decode_err(ext_at, "truncated extensible fmt chunk"))?;
        r.take(6, "extensible fmt")?;
        r.u16("extensible sub-format")?
    } else {
        tag
    };
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => Encoding::Pcm16,
        (FORMAT_PCM, 24) => Encoding::Pcm24,
        (FORMAT_FLOAT, 32) => Encoding::Float32,
        (tag, bits) => {
            return Err(decode_err(offset, format!("unsupported encoding: format tag {tag}, {bits} bits per sample")))
        }
    };
    if !(1..=2).contains(&channels) {
        return Err(decode_err(offset + 2, format!("unsupported channel count {channels}")));
    }
    if sample_rate_hz == 0 {
        return Err(decode_err(offset + 4, "sample rate is zero"));
    }
    if block_align as usize != channels as usize * bits as usize / 8 {
        return Err(decode_err(offset + 12, format!("block alignment {block_align} inconsistent with {channels}×{bits} bits")));
    }
    Ok(Format { encoding, channels, sample_rate_hz, block_align, bits })
}

/// Decode a WAV byte buffer. 16- and 24-bit integers are scaled by
/// 2^-(bits-1); stereo frames are averaged to mono.
pub fn decode_wav<T: Scalar>(bytes: &[u8]) -> Result<(WavInfo, AudioClip<T>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "RIFF header")? != b"RIFF" {
        return Err(decode_err(0, "missing RIFF signature"));
    }
    r.u32("RIFF header")?;
    if r.take(4, "RIFF header")? != b"WAVE" {
        return Err(decode_err(8, "missing WAVE signature"));
    }
    let mut fmt: Option<Format> = None;
    loop {
        if r.remaining() < 8 {
            return Err(decode_err(r.pos, "no data chunk"));
        }
        let chunk_at = r.pos;
        let id: [u8; 4] = r.take(4, "chunk id")?.try_into().expect("4 bytes");
        let size = r.u32("chunk size")? as usize;
        let body_at = r.pos;
        if &id == b"data" {
            let f = fmt.ok_or_else(|| decode_err(chunk_at, "data chunk before fmt chunk"))?;
            // Some recorders leave a stale size; read whatever whole frames exist.
            let available = size.min(r.remaining());
            if available < size {
                tracing::warn!(declared = size, available, "WAV data chunk is truncated");
            }
            let data = &bytes[body_at..body_at + available];
            return Ok(decode_frames(&f, data));
        }
        let body = r.take(size, "chunk body").map_err(|_| decode_err(chunk_at, format!("chunk {:?} overruns the file", String::from_utf8_lossy(&id))))?;
        if &id == b"fmt " {
            fmt = Some(parse_fmt(body, body_at)?);
        }
        if size % 2 == 1 && r.remaining() > 0 {
            r.pos += 1;
        }
    }
}

fn decode_frames<T: Scalar>(f: &Format, data: &[u8]) -> (WavInfo, AudioClip<T>) {
    let width = f.bits as usize / 8;
    let frames = data.len() / f.block_align as usize;
    let sample = |b: &[u8]| -> f64 {
        match f.encoding {
            Encoding::Pcm16 => i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
            Encoding::Pcm24 => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f64 / 8_388_608.0
            }
            Encoding::Float32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        }
    };
    let samples = data
        .chunks_exact(f.block_align as usize)
        .take(frames)
        .map(|frame| {
            let sum: f64 = frame.chunks_exact(width).map(sample).sum();
            T::lit(sum / f.channels as f64)
        })
        .collect();
    let info = WavInfo { sample_rate_hz: f.sample_rate_hz, channels: f.channels, bit_depth: f.bits, n_samples: frames };
    (info, AudioClip::new(samples, f.sample_rate_hz))
}

/// Read and decode a WAV file; the clip's source id is the path.
pub fn read_wav<T: Scalar>(path: impl AsRef<Path>) -> Result<AudioClip<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, clip) = decode_wav(&bytes)?;
    Ok(clip.with_source(path.display().to_string()))
}

fn header(sample_rate_hz: u32, format: u16, bits: u16, data_len: usize) -> Vec<u8> {
    let block = bits / 8;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * block as u32).to_le_bytes());
    out.extend_from_slice(&block.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    out
}

/// Mono PCM-16 encoding; samples are clamped to [-1, 1) and rounded.
pub fn encode_wav_pcm16<T: Scalar>(clip: &AudioClip<T>) -> Vec<u8> {
    let mut out = header(clip.sample_rate_hz, FORMAT_PCM, 16, clip.len() * 2);
    for &s in &clip.samples {
        let v = (s.to_f64_lossy() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Mono IEEE float-32 encoding.
pub fn encode_wav_f32<T: Scalar>(clip: &AudioClip<T>) -> Vec<u8> {
    let mut out = header(clip.sample_rate_hz, FORMAT_FLOAT, 32, clip.len() * 4);
    for &s in &clip.samples {
        out.extend_from_slice(&(s.to_f64_lossy() as f32).to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16<T: Scalar>(path: impl AsRef<Path>, clip: &AudioClip<T>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_pcm16(clip)).map_err(|e| Error::io(path, e))
}

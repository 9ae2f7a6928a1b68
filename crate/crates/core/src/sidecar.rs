//! CIAF sidecar container: per-frame motion vectors, residuals and frame types
//! harvested from an encoded stream.
//!
//! Layout (all integers little-endian, see `docs/format.md`):
//!
//! ```text
//! "CIAF"  u16 version  u16 width  u16 height  u32 frame_count
//! per frame:
//!   u8 frame_type (0 = I, 1 = P)
//!   H*W*2 x i16 motion, row-major, (dy, dx) interleaved, quarter-pel
//!   H*W   x i16 luma residual, row-major
//! ```

use thiserror::Error;

use crate::tensor::FeatureTensor;

pub const MAGIC: &[u8; 4] = b"CIAF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 2 + 2 + 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SidecarError {
    #[error("bad magic {0:?}, expected \"CIAF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported sidecar version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated sidecar: need {needed} bytes, have {available}")]
    Truncated { needed: u64, available: u64 },
    #[error("{0} trailing bytes after the last frame")]
    TrailingBytes(u64),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("stream contains no frames")]
    NoFrames,
    #[error("frame {frame}: dimensions {actual} do not match stream {expected}")]
    DimMismatch {
        frame: usize,
        expected: String,
        actual: String,
    },
    #[error("frame {frame}: unknown frame type {value}")]
    InvalidFrameType { frame: usize, value: u8 },
    #[error("first frame must be an I-frame")]
    FirstFrameNotIntra,
    #[error("frame {frame}: I-frame carries non-zero motion")]
    IntraMotion { frame: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameType {
    I,
    P,
}

impl FrameType {
    fn code(self) -> u8 {
        match self {
            FrameType::I => 0,
            FrameType::P => 1,
        }
    }

    fn from_code(frame: usize, value: u8) -> Result<Self, SidecarError> {
        match value {
            0 => Ok(FrameType::I),
            1 => Ok(FrameType::P),
            _ => Err(SidecarError::InvalidFrameType { frame, value }),
        }
    }
}

/// Dense per-pixel motion at quarter-pel precision, `(dy, dx)` per pixel.
///
/// A vector points from the current pixel to its reference position in the
/// previous frame. Intra-coded pixels carry `(0, 0)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotionField {
    height: usize,
    width: usize,
    mv: Vec<[i16; 2]>,
}

impl MotionField {
    pub fn new(height: usize, width: usize, mv: Vec<[i16; 2]>) -> Result<Self, SidecarError> {
        if mv.len() != height * width {
            return Err(SidecarError::DimMismatch {
                frame: 0,
                expected: format!("{} vectors", height * width),
                actual: format!("{} vectors", mv.len()),
            });
        }
        Ok(Self { height, width, mv })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::uniform(height, width, [0, 0])
    }

    pub fn uniform(height: usize, width: usize, v: [i16; 2]) -> Self {
        Self {
            height,
            width,
            mv: vec![v; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vectors(&self) -> &[[i16; 2]] {
        &self.mv
    }

    pub fn vectors_mut(&mut self) -> &mut [[i16; 2]] {
        &mut self.mv
    }

    pub fn at(&self, y: usize, x: usize) -> [i16; 2] {
        self.mv[y * self.width + x]
    }

    pub fn is_zero(&self) -> bool {
        self.mv.iter().all(|v| *v == [0, 0])
    }
}

/// Per-pixel signed luma residual.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualMap {
    height: usize,
    width: usize,
    res: Vec<i16>,
}

impl ResidualMap {
    pub fn new(height: usize, width: usize, res: Vec<i16>) -> Result<Self, SidecarError> {
        if res.len() != height * width {
            return Err(SidecarError::DimMismatch {
                frame: 0,
                expected: format!("{} residuals", height * width),
                actual: format!("{} residuals", res.len()),
            });
        }
        Ok(Self { height, width, res })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            res: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[i16] {
        &self.res
    }

    pub fn values_mut(&mut self) -> &mut [i16] {
        &mut self.res
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SidecarFrame {
    pub frame_type: FrameType,
    pub motion: MotionField,
    pub residual: ResidualMap,
}

impl SidecarFrame {
    /// An I-frame of the given size: zero motion, zero stored residual.
    pub fn intra(height: usize, width: usize) -> Self {
        Self {
            frame_type: FrameType::I,
            motion: MotionField::zeros(height, width),
            residual: ResidualMap::zeros(height, width),
        }
    }
}

/// A validated sidecar. Construct with [`SidecarStream::new`] or [`parse_sidecar`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SidecarStream {
    width: usize,
    height: usize,
    frames: Vec<SidecarFrame>,
}

impl SidecarStream {
    pub fn new(width: usize, height: usize, frames: Vec<SidecarFrame>) -> Result<Self, SidecarError> {
        let s = Self { width, height, frames };
        s.validate()?;
        Ok(s)
    }

    pub fn version(&self) -> u16 {
        VERSION
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[SidecarFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<SidecarFrame> {
        self.frames
    }

    fn validate(&self) -> Result<(), SidecarError> {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 || w > u16::MAX as usize || h > u16::MAX as usize {
            return Err(SidecarError::InvalidDimensions { width: w, height: h });
        }
        if self.frames.is_empty() {
            return Err(SidecarError::NoFrames);
        }
        if self.frames.len() > u32::MAX as usize {
            return Err(SidecarError::InvalidDimensions { width: w, height: h });
        }
        for (i, f) in self.frames.iter().enumerate() {
            for (what, fh, fw) in [
                ("motion", f.motion.height, f.motion.width),
                ("residual", f.residual.height, f.residual.width),
            ] {
                if (fh, fw) != (h, w) {
                    return Err(SidecarError::DimMismatch {
                        frame: i,
                        expected: format!("{w}x{h}"),
                        actual: format!("{what} {fw}x{fh}"),
                    });
                }
            }
            if f.frame_type == FrameType::I && !f.motion.is_zero() {
                return Err(SidecarError::IntraMotion { frame: i });
            }
        }
        if self.frames[0].frame_type != FrameType::I {
            return Err(SidecarError::FirstFrameNotIntra);
        }
        Ok(())
    }
}

fn frame_bytes(width: usize, height: usize) -> u64 {
    1 + 6 * (width as u64) * (height as u64)
}

/// Serialises a stream. The output is a pure function of the value.
pub fn serialize_sidecar(s: &SidecarStream) -> Result<Vec<u8>, SidecarError> {
    s.validate()?;
    let total = HEADER_LEN as u64 + frame_bytes(s.width, s.height) * s.frames.len() as u64;
    let mut out = Vec::with_capacity(total as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(s.width as u16).to_le_bytes());
    out.extend_from_slice(&(s.height as u16).to_le_bytes());
    out.extend_from_slice(&(s.frames.len() as u32).to_le_bytes());
    for f in &s.frames {
        out.push(f.frame_type.code());
        for [dy, dx] in &f.motion.mv {
            out.extend_from_slice(&dy.to_le_bytes());
            out.extend_from_slice(&dx.to_le_bytes());
        }
        for r in &f.residual.res {
            out.extend_from_slice(&r.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len() as u64, total);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SidecarError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(SidecarError::Truncated {
                needed: self.pos as u64 + n as u64,
                available: self.bytes.len() as u64,
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SidecarError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, SidecarError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, SidecarError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn i16_at(b: &[u8], i: usize) -> i16 {
    i16::from_le_bytes([b[2 * i], b[2 * i + 1]])
}

/// Parses and validates a sidecar. Never returns a partially valid stream.
pub fn parse_sidecar(bytes: &[u8]) -> Result<SidecarStream, SidecarError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(SidecarError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(SidecarError::UnsupportedVersion(version));
    }
    let width = r.u16()? as usize;
    let height = r.u16()? as usize;
    let frame_count = r.u32()? as usize;
    if width == 0 || height == 0 {
        return Err(SidecarError::InvalidDimensions { width, height });
    }
    if frame_count == 0 {
        return Err(SidecarError::NoFrames);
    }

    // Size the whole payload before allocating anything.
    let needed = frame_bytes(width, height)
        .saturating_mul(frame_count as u64)
        .saturating_add(HEADER_LEN as u64);
    let available = bytes.len() as u64;
    if available < needed {
        return Err(SidecarError::Truncated { needed, available });
    }
    if available > needed {
        return Err(SidecarError::TrailingBytes(available - needed));
    }

    let pixels = width * height;
    let mut frames = Vec::with_capacity(frame_count);
    for i in 0..frame_count {
        let frame_type = FrameType::from_code(i, r.u8()?)?;
        let mv_bytes = r.take(4 * pixels)?;
        let mv = (0..pixels)
            .map(|p| [i16_at(mv_bytes, 2 * p), i16_at(mv_bytes, 2 * p + 1)])
            .collect();
        let res_bytes = r.take(2 * pixels)?;
        let res = (0..pixels).map(|p| i16_at(res_bytes, p)).collect();
        frames.push(SidecarFrame {
            frame_type,
            motion: MotionField { height, width, mv },
            residual: ResidualMap { height, width, res },
        });
    }
    SidecarStream::new(width, height, frames)
}

/// Converts quarter-pel motion to a `2 x H x W` tensor in pixel units
/// (component 0 vertical, component 1 horizontal).
pub fn mv_to_pixels(m: &MotionField) -> FeatureTensor {
    let plane = m.height * m.width;
    let mut data = vec![0f32; 2 * plane];
    for (i, [dy, dx]) in m.mv.iter().enumerate() {
        data[i] = *dy as f32 / 4.0;
        data[plane + i] = *dx as f32 / 4.0;
    }
    FeatureTensor::new(2, m.height, m.width, data).expect("motion field dims are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_frame_fixture() -> SidecarStream {
        let p = SidecarFrame {
            frame_type: FrameType::P,
            motion: MotionField::uniform(4, 4, [1, 0]),
            residual: ResidualMap::zeros(4, 4),
        };
        SidecarStream::new(4, 4, vec![SidecarFrame::intra(4, 4), p]).unwrap()
    }

    #[test]
    fn empty_input_is_truncated() {
        assert!(matches!(parse_sidecar(&[]), Err(SidecarError::Truncated { .. })));
    }

    #[test]
    fn fixture_parses_to_literal_values() {
        let bytes = serialize_sidecar(&two_frame_fixture()).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 2 * (1 + 6 * 16));
        assert_eq!(&bytes[..4], b"CIAF");
        assert_eq!(&bytes[4..14], &[1, 0, 4, 0, 4, 0, 2, 0, 0, 0]);
        let s = parse_sidecar(&bytes).unwrap();
        assert_eq!((s.width(), s.height(), s.frame_count()), (4, 4, 2));
        assert_eq!(s.frames()[0].frame_type, FrameType::I);
        assert_eq!(s.frames()[1].frame_type, FrameType::P);
        assert!(s.frames()[1].motion.vectors().iter().all(|v| *v == [1, 0]));
        assert!(s.frames()[1].residual.values().iter().all(|&r| r == 0));
        assert!(s.frames()[0].motion.is_zero());
    }

    #[test]
    fn serialization_is_deterministic() {
        let s = two_frame_fixture();
        assert_eq!(serialize_sidecar(&s).unwrap(), serialize_sidecar(&s).unwrap());
    }

    #[test]
    fn distinct_error_kinds() {
        let good = serialize_sidecar(&two_frame_fixture()).unwrap();

        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(parse_sidecar(&b), Err(SidecarError::BadMagic(_))));

        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(parse_sidecar(&b), Err(SidecarError::UnsupportedVersion(2)));

        assert!(matches!(
            parse_sidecar(&good[..good.len() - 1]),
            Err(SidecarError::Truncated { .. })
        ));

        let mut b = good.clone();
        b.push(0);
        assert_eq!(parse_sidecar(&b), Err(SidecarError::TrailingBytes(1)));

        let mut b = good.clone();
        b[HEADER_LEN] = 1;
        assert_eq!(parse_sidecar(&b), Err(SidecarError::FirstFrameNotIntra));

        let mut b = good.clone();
        b[HEADER_LEN] = 7;
        assert_eq!(
            parse_sidecar(&b),
            Err(SidecarError::InvalidFrameType { frame: 0, value: 7 })
        );

        let mut b = good;
        b[6] = 0;
        assert!(matches!(parse_sidecar(&b), Err(SidecarError::InvalidDimensions { .. })));
    }

    #[test]
    fn mismatched_frame_dims_rejected() {
        let p = SidecarFrame {
            frame_type: FrameType::P,
            motion: MotionField::zeros(4, 5),
            residual: ResidualMap::zeros(4, 4),
        };
        let err = SidecarStream::new(4, 4, vec![SidecarFrame::intra(4, 4), p]).unwrap_err();
        assert!(matches!(err, SidecarError::DimMismatch { frame: 1, .. }));
    }

    #[test]
    fn intra_frames_must_have_zero_motion() {
        let mut i = SidecarFrame::intra(2, 2);
        i.motion = MotionField::uniform(2, 2, [4, 0]);
        assert_eq!(
            SidecarStream::new(2, 2, vec![i]),
            Err(SidecarError::IntraMotion { frame: 0 })
        );
    }

    #[test]
    fn quarter_pel_scaling() {
        let m = MotionField::new(1, 3, vec![[0, 0], [6, -4], [i16::MAX, i16::MIN]]).unwrap();
        let t = mv_to_pixels(&m);
        assert_eq!(t.plane(0), &[0.0, 1.5, 8191.75]);
        assert_eq!(t.plane(1), &[0.0, -1.0, -8192.0]);
    }
}

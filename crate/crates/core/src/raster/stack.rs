//! In-memory raster stacks and the `RST1` container.
//!
//! ```text
//! "RST1" | u32 version=1 | u32 t_len | u32 height | u32 width | u32 n_channels
//! n_channels x (u16 name length | UTF-8 name)
//! f32 data, [t][row][col][channel] order
//! missing mask, packed bits in the same order (LSB first, zero-padded)
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::RasterError;

pub const MAGIC: &[u8; 4] = b"RST1";
pub const VERSION: u32 = 1;

pub const NDVI: &str = "NDVI";
pub const EVI: &str = "EVI";
pub const LST: &str = "LST";
pub const FIREMASK: &str = "FIREMASK";
pub const PRECIP: &str = "PRECIP";
pub const QA: &str = "QA";

pub const DEFAULT_CHANNELS: [&str; 6] = [NDVI, EVI, LST, FIREMASK, PRECIP, QA];

/// Valid NDVI/EVI range before ratio transformation.
pub const INDEX_RANGE: (f32, f32) = (-0.2, 1.0);

/// A `(T, H, W, C)` grid of `f32` values with a per-value missing flag.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterStack {
    t_len: usize,
    height: usize,
    width: usize,
    channels: Vec<String>,
    data: Vec<f32>,
    missing: Vec<bool>,
}

impl RasterStack {
    pub fn new(t_len: usize, height: usize, width: usize, channels: &[&str]) -> Self {
        let n = t_len * height * width * channels.len();
        Self {
            t_len,
            height,
            width,
            channels: channels.iter().map(|s| s.to_string()).collect(),
            data: vec![0.0; n],
            missing: vec![false; n],
        }
    }

    pub fn from_parts(
        t_len: usize,
        height: usize,
        width: usize,
        channels: Vec<String>,
        data: Vec<f32>,
        missing: Vec<bool>,
    ) -> Result<Self, RasterError> {
        let n = t_len
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .and_then(|v| v.checked_mul(channels.len()))
            .ok_or_else(|| RasterError::Invalid("dimension overflow".into()))?;
        if data.len() != n || missing.len() != n {
            return Err(RasterError::Invalid(format!(
                "expected {n} values, got {} data / {} mask",
                data.len(),
                missing.len()
            )));
        }
        Ok(Self { t_len, height, width, channels, data, missing })
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn missing_mut(&mut self) -> &mut [bool] {
        &mut self.missing
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    pub fn require_channel(&self, name: &str) -> Result<usize, RasterError> {
        self.channel_index(name).ok_or_else(|| RasterError::MissingChannel(name.to_string()))
    }

    #[inline]
    pub fn index(&self, t: usize, row: usize, col: usize, ch: usize) -> usize {
        ((t * self.height + row) * self.width + col) * self.channels.len() + ch
    }

    #[inline]
    pub fn get(&self, t: usize, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.index(t, row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, row: usize, col: usize, ch: usize, v: f32) {
        let i = self.index(t, row, col, ch);
        self.data[i] = v;
    }

    #[inline]
    pub fn is_missing(&self, t: usize, row: usize, col: usize, ch: usize) -> bool {
        self.missing[self.index(t, row, col, ch)]
    }

    pub fn set_missing(&mut self, t: usize, row: usize, col: usize, ch: usize, m: bool) {
        let i = self.index(t, row, col, ch);
        self.missing[i] = m;
    }

    /// One channel as a `[t][row][col]` vector.
    pub fn channel(&self, ch: usize) -> Vec<f32> {
        self.data.chunks_exact(self.channels.len()).map(|px| px[ch]).collect()
    }

    /// Spatial mean of channel `ch` at time `t`, skipping missing values.
    pub fn frame_mean(&self, t: usize, ch: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for r in 0..self.height {
            for c in 0..self.width {
                if !self.is_missing(t, r, c, ch) {
                    sum += self.get(t, r, c, ch) as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Copies out a `rows x cols` window starting at `(row0, col0)`.
    pub fn window(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self, RasterError> {
        if row0 + rows > self.height || col0 + cols > self.width {
            return Err(RasterError::Invalid(format!(
                "window {rows}x{cols} at ({row0},{col0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels.len();
        let mut out = Self::from_parts(
            self.t_len,
            rows,
            cols,
            self.channels.clone(),
            vec![0.0; self.t_len * rows * cols * c],
            vec![false; self.t_len * rows * cols * c],
        )?;
        for t in 0..self.t_len {
            for r in 0..rows {
                let src = self.index(t, row0 + r, col0, 0);
                let dst = out.index(t, r, 0, 0);
                out.data[dst..dst + cols * c].copy_from_slice(&self.data[src..src + cols * c]);
                out.missing[dst..dst + cols * c].copy_from_slice(&self.missing[src..src + cols * c]);
            }
        }
        Ok(out)
    }

    /// Writes `part` into this stack at `(row0, col0)`; inverse of [`window`](Self::window).
    pub fn paste(&mut self, part: &Self, row0: usize, col0: usize) -> Result<(), RasterError> {
        if part.channels != self.channels || part.t_len != self.t_len {
            return Err(RasterError::Invalid("paste: channel or time mismatch".into()));
        }
        if row0 + part.height > self.height || col0 + part.width > self.width {
            return Err(RasterError::Invalid("paste: window out of range".into()));
        }
        let c = self.channels.len();
        for t in 0..self.t_len {
            for r in 0..part.height {
                let src = part.index(t, r, 0, 0);
                let dst = self.index(t, row0 + r, col0, 0);
                self.data[dst..dst + part.width * c].copy_from_slice(&part.data[src..src + part.width * c]);
                self.missing[dst..dst + part.width * c].copy_from_slice(&part.missing[src..src + part.width * c]);
            }
        }
        Ok(())
    }

    /// Keeps only the named channels, in the given order.
    pub fn select_channels(&self, names: &[&str]) -> Result<Self, RasterError> {
        let idx = names.iter().map(|n| self.require_channel(n)).collect::<Result<Vec<_>, _>>()?;
        let px = self.t_len * self.height * self.width;
        let c = self.channels.len();
        let mut data = Vec::with_capacity(px * idx.len());
        let mut missing = Vec::with_capacity(px * idx.len());
        for p in 0..px {
            for &i in &idx {
                data.push(self.data[p * c + i]);
                missing.push(self.missing[p * c + i]);
            }
        }
        Self::from_parts(self.t_len, self.height, self.width, names.iter().map(|s| s.to_string()).collect(), data, missing)
    }

    /// Checks the value-range invariants of the raw (pre-ratio) stack.
    pub fn validate_raw(&self) -> Result<(), RasterError> {
        for name in [NDVI, EVI] {
            if let Some(ch) = self.channel_index(name) {
                for (i, px) in self.data.chunks_exact(self.channels.len()).enumerate() {
                    let v = px[ch];
                    if !self.missing[i * self.channels.len() + ch] && !(INDEX_RANGE.0..=INDEX_RANGE.1).contains(&v) {
                        return Err(RasterError::Invalid(format!("{name} value {v} outside [-0.2, 1.0]")));
                    }
                }
            }
        }
        if let Some(ch) = self.channel_index(QA) {
            for px in self.data.chunks_exact(self.channels.len()) {
                let v = px[ch];
                if !(v == 0.0 || v == 1.0 || v == 2.0 || v == 3.0) {
                    return Err(RasterError::Invalid(format!("QA value {v} not in {{0,1,2,3}}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RasterError> {
        let dim = |v: usize| u32::try_from(v).map_err(|_| RasterError::Invalid(format!("dimension {v} exceeds u32")));
        let mut out = Vec::with_capacity(24 + self.data.len() * 4 + self.missing.len() / 8 + 1);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, dim(self.t_len)?, dim(self.height)?, dim(self.width)?, dim(self.channels.len())?] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for name in &self.channels {
            let len = u16::try_from(name.len()).map_err(|_| RasterError::Invalid(format!("channel name too long: {name}")))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut packed = vec![0u8; self.missing.len().div_ceil(8)];
        for (i, &m) in self.missing.iter().enumerate() {
            if m {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&packed);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        let mut cur = Reader { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(RasterError::Format("bad magic, expected RST1".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(RasterError::Version(version));
        }
        let t_len = cur.u32()? as usize;
        let height = cur.u32()? as usize;
        let width = cur.u32()? as usize;
        let n_ch = cur.u32()? as usize;
        let mut channels = Vec::with_capacity(n_ch.min(256));
        for _ in 0..n_ch {
            let len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(cur.take(len)?)
                .map_err(|_| RasterError::Format("channel name is not UTF-8".into()))?;
            channels.push(name.to_string());
        }
        let n = (t_len as u128) * (height as u128) * (width as u128) * (n_ch as u128);
        let need = n * 4 + n.div_ceil(8);
        let have = (bytes.len() - cur.pos) as u128;
        if need > have {
            return Err(RasterError::Truncated { expected: need as u64, actual: have as u64 });
        }
        let n = n as usize;
        let data = cur.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let packed = cur.take(n.div_ceil(8))?;
        let missing = (0..n).map(|i| packed[i / 8] & (1 << (i % 8)) != 0).collect();
        if cur.pos != bytes.len() {
            return Err(RasterError::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Self::from_parts(t_len, height, width, channels, data, missing)
    }
}

pub fn write_stack(stack: &RasterStack, path: &Path) -> Result<(), RasterError> {
    let bytes = stack.to_bytes()?;
    fs::write(path, bytes).map_err(|e| RasterError::io(path, e))
}

pub fn read_stack(path: &Path) -> Result<RasterStack, RasterError> {
    let bytes = fs::read(path).map_err(|e| RasterError::io(path, e))?;
    RasterStack::from_bytes(&bytes)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RasterError> {
        if self.pos + n > self.bytes.len() {
            return Err(RasterError::Truncated { expected: (self.pos + n) as u64, actual: self.bytes.len() as u64 });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, RasterError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_stack_layout() {
        let mut s = RasterStack::new(1, 1, 1, &[NDVI]);
        s.set(0, 0, 0, 0, 0.5);
        let b = s.to_bytes().unwrap();
        let header = 4 + 5 * 4 + 2 + NDVI.len();
        assert_eq!(b.len(), header + 4 + 1);
        assert_eq!(&b[..4], b"RST1");
        assert_eq!(&b[header..header + 4], &0.5f32.to_le_bytes());
        assert_eq!(b[header + 4], 0);
    }

    #[test]
    fn full_size_payload() {
        let s = RasterStack::new(25, 50, 50, &DEFAULT_CHANNELS);
        let b = s.to_bytes().unwrap();
        let names: usize = DEFAULT_CHANNELS.iter().map(|n| 2 + n.len()).sum();
        let data = 25 * 50 * 50 * 6 * 4;
        assert_eq!(data, 1_500_000);
        assert_eq!(b.len(), 24 + names + data + (25 * 50 * 50 * 6usize).div_ceil(8));
    }

    #[test]
    fn corrupted_magic_and_truncation() {
        let s = RasterStack::new(2, 3, 3, &[NDVI, QA]);
        let mut b = s.to_bytes().unwrap();
        assert!(matches!(RasterStack::from_bytes(&b[..b.len() - 3]), Err(RasterError::Truncated { .. })));
        b[0] = b'X';
        assert!(matches!(RasterStack::from_bytes(&b), Err(RasterError::Format(_))));
        let mut v = s.to_bytes().unwrap();
        v[4] = 2;
        assert!(matches!(RasterStack::from_bytes(&v), Err(RasterError::Version(2))));
    }

    #[test]
    fn header_claiming_more_than_file() {
        let s = RasterStack::new(1, 2, 2, &[NDVI]);
        let mut b = s.to_bytes().unwrap();
        b[8..12].copy_from_slice(&1000u32.to_le_bytes());
        assert!(matches!(RasterStack::from_bytes(&b), Err(RasterError::Truncated { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.rst");
        let mut s = RasterStack::new(2, 3, 4, &DEFAULT_CHANNELS);
        s.set(1, 2, 3, 0, 0.25);
        s.set_missing(1, 2, 3, 1, true);
        write_stack(&s, &path).unwrap();
        assert_eq!(read_stack(&path).unwrap(), s);
        assert!(read_stack(&dir.path().join("nope.rst")).is_err());
    }

    #[test]
    fn window_and_paste_invert() {
        let mut s = RasterStack::new(2, 4, 6, &[NDVI, QA]);
        for (i, v) in s.data_mut().iter_mut().enumerate() {
            *v = i as f32;
        }
        let w = s.window(1, 2, 2, 3).unwrap();
        assert_eq!(w.get(1, 0, 0, 1), s.get(1, 1, 2, 1));
        let mut blank = RasterStack::new(2, 4, 6, &[NDVI, QA]);
        blank.paste(&w, 1, 2).unwrap();
        assert_eq!(blank.get(0, 2, 4, 0), s.get(0, 2, 4, 0));
        assert!(s.window(3, 0, 2, 2).is_err());
    }

    #[test]
    fn raw_validation() {
        let mut s = RasterStack::new(1, 1, 2, &DEFAULT_CHANNELS);
        s.validate_raw().unwrap();
        s.set(0, 0, 1, 0, 1.5);
        assert!(s.validate_raw().is_err());
        s.set_missing(0, 0, 1, 0, true);
        s.validate_raw().unwrap();
        s.set(0, 0, 0, 5, 2.5);
        assert!(s.validate_raw().is_err());
    }

    fn arb_stack() -> impl Strategy<Value = RasterStack> {
        (1usize..4, 1usize..5, 1usize..5, 1usize..4).prop_flat_map(|(t, h, w, c)| {
            let n = t * h * w * c;
            (
                proptest::collection::vec(proptest::num::f32::ANY, n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(data, missing)| {
                    let names = (0..c).map(|i| format!("ch{i}")).collect();
                    RasterStack::from_parts(t, h, w, names, data, missing).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(s in arb_stack()) {
            let back = RasterStack::from_bytes(&s.to_bytes().unwrap()).unwrap();
            prop_assert_eq!(back.missing(), s.missing());
            let a: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = s.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}

//! Packed bit arrays used for validity tracking and row selection masks.
//!
//! Bit `i` lives in byte `i / 8` at position `i % 8`, least-significant bit
//! first, so row 0 is the LSB of byte 0. Bits past `len` are always zero,
//! which keeps the byte representation canonical and directly comparable.

/// A length-aware bitmap over `ceil(len / 8)` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    bytes: Vec<u8>,
    len: usize,
}

/// Number of bytes a bitmap over `nrows` bits occupies.
pub fn validity_bytes(nrows: usize) -> usize {
    nrows.div_ceil(8)
}

impl Bitmap {
    /// All bits set.
    pub fn all_set(len: usize) -> Self {
        let mut bytes = vec![0xFFu8; validity_bytes(len)];
        Self::mask_tail(&mut bytes, len);
        Bitmap { bytes, len }
    }

    /// All bits clear.
    pub fn all_clear(len: usize) -> Self {
        Bitmap {
            bytes: vec![0u8; validity_bytes(len)],
            len,
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut bm = Bitmap::all_clear(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bm.set(i, true);
            }
        }
        bm
    }

    /// Reinterprets raw bytes as a bitmap of `len` bits. Trailing bits in the
    /// last byte are cleared so equality stays byte-wise.
    pub fn from_bytes(mut bytes: Vec<u8>, len: usize) -> Option<Self> {
        if bytes.len() != validity_bytes(len) {
            return None;
        }
        Self::mask_tail(&mut bytes, len);
        Some(Bitmap { bytes, len })
    }

    fn mask_tail(bytes: &mut [u8], len: usize) {
        if !len.is_multiple_of(8) {
            if let Some(last) = bytes.last_mut() {
                *last &= (1u8 << (len % 8)) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.bytes[i / 8] & (1 << (i % 8)) != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        if value {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        self.len += 1;
        if value {
            self.set(self.len - 1, true);
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn all_ones(&self) -> bool {
        self.count_ones() == self.len
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    pub fn and(&self, other: &Bitmap) -> Bitmap {
        assert_eq!(self.len, other.len, "bitmap length mismatch");
        let bytes = self
            .bytes
            .iter()
            .zip(&other.bytes)
            .map(|(a, b)| a & b)
            .collect();
        Bitmap {
            bytes,
            len: self.len,
        }
    }

    pub fn not(&self) -> Bitmap {
        let mut bytes: Vec<u8> = self.bytes.iter().map(|b| !b).collect();
        Self::mask_tail(&mut bytes, self.len);
        Bitmap {
            bytes,
            len: self.len,
        }
    }
}

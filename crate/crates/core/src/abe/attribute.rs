//! Bag-of-bits encoding of integer keys.

use std::fmt;

/// Power-of-two thresholds that get a dedicated "k >= 2^m" marker attribute.
pub const GE2EXP_MARKERS: [u8; 4] = [4, 8, 16, 32];

/// Size of the attribute universe: two polarities per bit plus the markers.
pub const UNIVERSE_SIZE: usize = 64 * 2 + GE2EXP_MARKERS.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    /// Bit `position` of the key equals `value`.
    Bit { position: u8, value: bool },
    /// The key is at least `2^m`.
    Ge2Exp(u8),
}

impl Attribute {
    pub fn bit(position: u8, value: bool) -> Self {
        debug_assert!(position < 64);
        Attribute::Bit { position, value }
    }

    /// Dense index into the universe, `0..UNIVERSE_SIZE`.
    pub fn index(self) -> usize {
        match self {
            Attribute::Bit { position, value } => 2 * position as usize + value as usize,
            Attribute::Ge2Exp(m) => {
                let slot = GE2EXP_MARKERS.iter().position(|&x| x == m).expect("ge2exp marker outside the universe");
                128 + slot
            }
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0..=127 => Some(Attribute::Bit { position: (index / 2) as u8, value: index % 2 == 1 }),
            128..=131 => Some(Attribute::Ge2Exp(GE2EXP_MARKERS[index - 128])),
            _ => None,
        }
    }

    pub fn universe() -> impl Iterator<Item = Attribute> {
        (0..UNIVERSE_SIZE).filter_map(Attribute::from_index)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attribute::Bit { position, value } => write!(f, "bit{}={}", position, *value as u8),
            Attribute::Ge2Exp(m) => write!(f, "ge2exp{}", m),
        }
    }
}

/// Bit width used when encoding keys and building comparison trees.
///
/// Production uses 64 bits. The 8-bit width exists so that exhaustive sweeps
/// over every (threshold, key) pair stay cheap; it only keeps markers below
/// its width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyWidth {
    bits: u8,
}

impl KeyWidth {
    pub const W64: KeyWidth = KeyWidth { bits: 64 };
    pub const W8: KeyWidth = KeyWidth { bits: 8 };

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn max_key(self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    pub fn markers(self) -> impl Iterator<Item = u8> {
        GE2EXP_MARKERS.into_iter().filter(move |&m| m < self.bits)
    }

    /// `B_k`: one polarity attribute per bit plus every satisfied marker.
    ///
    /// Keys wider than the width are truncated to it.
    pub fn encode(self, k: u64) -> AttributeSet {
        let k = k & self.max_key();
        let mut set = AttributeSet::default();
        for i in 0..self.bits {
            set.insert(Attribute::bit(i, (k >> i) & 1 == 1));
        }
        for m in self.markers() {
            if k >> m != 0 {
                set.insert(Attribute::Ge2Exp(m));
            }
        }
        set
    }
}

/// Encodes a 64-bit key into its attribute set.
pub fn encode_attributes(k: u64) -> AttributeSet {
    KeyWidth::W64.encode(k)
}

/// Subset of the attribute universe, stored as a bitmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct AttributeSet {
    words: [u64; 3],
}

impl AttributeSet {
    /// Bytes needed for the canonical bitmap encoding.
    pub const ENCODED_LEN: usize = UNIVERSE_SIZE.div_ceil(8);

    pub fn insert(&mut self, a: Attribute) {
        let i = a.index();
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, a: Attribute) -> bool {
        let i = a.index();
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Attributes in ascending universe order.
    pub fn iter(&self) -> impl Iterator<Item = Attribute> + '_ {
        (0..UNIVERSE_SIZE).filter(|&i| self.words[i / 64] & (1 << (i % 64)) != 0).filter_map(Attribute::from_index)
    }

    pub fn to_bytes(&self) -> [u8; Self::ENCODED_LEN] {
        let mut out = [0u8; Self::ENCODED_LEN];
        for i in 0..UNIVERSE_SIZE {
            if self.words[i / 64] & (1 << (i % 64)) != 0 {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    /// Rejects bitmaps with bits set beyond the universe.
    pub fn from_bytes(bytes: &[u8; Self::ENCODED_LEN]) -> Option<Self> {
        let mut set = AttributeSet::default();
        for (byte_idx, byte) in bytes.iter().enumerate() {
            for bit in 0..8 {
                if byte & (1 << bit) != 0 {
                    set.insert(Attribute::from_index(byte_idx * 8 + bit)?);
                }
            }
        }
        Some(set)
    }
}

impl FromIterator<Attribute> for AttributeSet {
    fn from_iter<I: IntoIterator<Item = Attribute>>(iter: I) -> Self {
        let mut set = AttributeSet::default();
        for a in iter {
            set.insert(a);
        }
        set
    }
}

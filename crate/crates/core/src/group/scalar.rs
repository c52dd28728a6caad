use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;

/// Order of the transparent backend's groups: the largest prime below 2^64.
pub const MODULUS: u64 = 18_446_744_073_709_551_557;

/// Exponent-space element, always reduced into `[0, MODULUS)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Scalar(u64);

impl Scalar {
    pub const ZERO: Scalar = Scalar(0);
    pub const ONE: Scalar = Scalar(1);

    pub fn new(value: u64) -> Self {
        Scalar(value % MODULUS)
    }

    pub fn from_u128(value: u128) -> Self {
        Scalar((value % MODULUS as u128) as u64)
    }

    /// Returns the canonical representative, `None` if `value >= MODULUS`.
    pub fn from_canonical(value: u64) -> Option<Self> {
        (value < MODULUS).then_some(Scalar(value))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Scalar::ONE;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    /// `2^exp mod p` for exponents wider than 64 bits.
    pub fn pow2_u128(exp: u128) -> Self {
        // 2 has order dividing p-1, so reduce the exponent first.
        let reduced = (exp % (MODULUS as u128 - 1)) as u64;
        Scalar(2).pow(reduced)
    }

    pub fn inverse(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(MODULUS - 2))
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: u64 = rng.random();
            if v < MODULUS {
                return Scalar(v);
            }
        }
    }

    pub fn random_nonzero<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let s = Self::random(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_be_bytes(bytes: [u8; 8]) -> Option<Self> {
        Self::from_canonical(u64::from_be_bytes(bytes))
    }
}

/// Inverts every element with a single field inversion. Returns `None` if any
/// input is zero.
pub fn batch_invert(values: &[Scalar]) -> Option<Vec<Scalar>> {
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = Scalar::ONE;
    for v in values {
        if v.is_zero() {
            return None;
        }
        prefix.push(acc);
        acc *= *v;
    }
    let mut inv = acc.inverse()?;
    let mut out = vec![Scalar::ZERO; values.len()];
    for i in (0..values.len()).rev() {
        out[i] = inv * prefix[i];
        inv *= values[i];
    }
    Some(out)
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for Scalar {
    fn from(v: u64) -> Self {
        Scalar::new(v)
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar::from_u128(self.0 as u128 + rhs.0 as u128)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        self + (-rhs)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        if self.0 == 0 {
            self
        } else {
            Scalar(MODULUS - self.0)
        }
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar::from_u128(self.0 as u128 * rhs.0 as u128)
    }
}

impl AddAssign for Scalar {
    fn add_assign(&mut self, rhs: Scalar) {
        *self = *self + rhs;
    }
}

impl SubAssign for Scalar {
    fn sub_assign(&mut self, rhs: Scalar) {
        *self = *self - rhs;
    }
}

impl MulAssign for Scalar {
    fn mul_assign(&mut self, rhs: Scalar) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, |a, b| a + b)
    }
}

impl std::iter::Product for Scalar {
    fn product<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ONE, |a, b| a * b)
    }
}

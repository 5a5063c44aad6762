//! Angles restricted to the eight-element group `{kπ/4 | k = 0..7}`.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// An angle `k·π/4` with `k` always reduced modulo 8.
///
/// Serialized as the bare integer `k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "i64", into = "u8")]
pub struct Angle(u8);

impl Angle {
    pub const ZERO: Angle = Angle(0);
    pub const QUARTER: Angle = Angle(1);
    pub const HALF_PI: Angle = Angle(2);
    pub const PI: Angle = Angle(4);

    /// All eight elements in increasing order of `k`.
    pub const ALL: [Angle; 8] = [
        Angle(0),
        Angle(1),
        Angle(2),
        Angle(3),
        Angle(4),
        Angle(5),
        Angle(6),
        Angle(7),
    ];

    pub fn new(k: i64) -> Self {
        Angle(k.rem_euclid(8) as u8)
    }

    /// The index `k` in `0..8`.
    pub fn k(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        f64::from(self.0) * std::f64::consts::FRAC_PI_4
    }

    /// `e^{i·angle}`.
    pub fn phase(self) -> Complex64 {
        Complex64::from_polar(1.0, self.radians())
    }

    /// `bit·π` for a classical bit.
    pub fn pi_times(bit: u8) -> Self {
        if bit & 1 == 1 {
            Angle::PI
        } else {
            Angle::ZERO
        }
    }

    /// `(-1)^bit · self`.
    pub fn signed(self, bit: u8) -> Self {
        if bit & 1 == 1 {
            -self
        } else {
            self
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Angle(rng.gen_range(0..8))
    }
}

impl From<i64> for Angle {
    fn from(k: i64) -> Self {
        Angle::new(k)
    }
}

impl From<Angle> for u8 {
    fn from(a: Angle) -> u8 {
        a.0
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle((self.0 + rhs.0) % 8)
    }
}

impl AddAssign for Angle {
    fn add_assign(&mut self, rhs: Angle) {
        *self = *self + rhs;
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        self + (-rhs)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle((8 - self.0) % 8)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => write!(f, "0"),
            4 => write!(f, "π"),
            k => write!(f, "{k}π/4"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pi_is_four() {
        assert_eq!(Angle::PI.k(), 4);
        assert_eq!(Angle::QUARTER + Angle::new(3), Angle::PI);
        assert!((Angle::PI.radians() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn reduces_negative_and_large() {
        assert_eq!(Angle::new(-1), Angle::new(7));
        assert_eq!(Angle::new(17), Angle::new(1));
        assert_eq!(-Angle::ZERO, Angle::ZERO);
    }

    #[test]
    fn serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Angle::new(5)).unwrap(), "5");
        let a: Angle = serde_json::from_str("-3").unwrap();
        assert_eq!(a, Angle::new(5));
    }

    proptest! {
        #[test]
        fn group_laws(a in 0i64..8, b in 0i64..8, c in 0i64..8) {
            let (a, b, c) = (Angle::new(a), Angle::new(b), Angle::new(c));
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!(a + (-a), Angle::ZERO);
            prop_assert_eq!(a - b + b, a);
            prop_assert!(a.k() < 8);
        }
    }
}

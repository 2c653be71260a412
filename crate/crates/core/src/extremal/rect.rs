//! Dyadic rectangles at arbitrary depth, with big offsets.

use std::fmt;
use std::str::FromStr;

use num::{BigInt, BigRational, BigUint, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poset::{BiTreeTopology, RectAddress};

/// `[off·2^-gen, (off+1)·2^-gen]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub gen: u32,
    pub off: BigUint,
}

impl DyadicInterval {
    pub fn new(gen: u32, off: impl Into<BigUint>) -> Result<Self> {
        let off = off.into();
        if off.bits() > gen as u64 {
            return Err(Error::Parameter(format!("offset {off} out of range at generation {gen}")));
        }
        Ok(Self { gen, off })
    }

    /// `[0, 2^-gen]`.
    pub fn corner(gen: u32) -> Self {
        Self { gen, off: BigUint::zero() }
    }

    /// Right half.
    pub fn upper_half(&self) -> Self {
        Self {
            gen: self.gen + 1,
            off: (&self.off << 1u32) + 1u32,
        }
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.gen >= self.gen && (&other.off >> (other.gen - self.gen) as usize) == self.off
    }

    /// Fraction of `other`'s length covered by `self`.
    pub fn overlap_fraction(&self, other: &Self) -> f64 {
        if self.contains(other) {
            1.0
        } else if other.contains(self) {
            0.5f64.powi((self.gen - other.gen) as i32)
        } else {
            0.0
        }
    }

    /// Generation of the smallest corner interval `[0, 2^-a]` containing `self`.
    pub fn corner_level(&self) -> u32 {
        self.gen - self.off.bits() as u32
    }

    fn endpoints(&self) -> (BigRational, BigRational) {
        let den = BigInt::one() << self.gen as usize;
        let lo = BigInt::from(self.off.clone());
        (
            BigRational::new(lo.clone(), den.clone()),
            BigRational::new(lo + 1, den),
        )
    }

    fn from_endpoints(a: &BigRational, b: &BigRational) -> Result<Self> {
        let len = b - a;
        let bad = || Error::Parse {
            path: "rect".into(),
            message: format!("[{a}, {b}] is not a dyadic interval of [0,1]"),
        };
        if !len.is_positive() || a.is_negative() || *b > BigRational::one() || !len.numer().is_one() {
            return Err(bad());
        }
        let den = len.denom();
        let gen = den.bits() - 1;
        if *den != BigInt::one() << gen as usize {
            return Err(bad());
        }
        let off = a / &len;
        if !off.is_integer() {
            return Err(bad());
        }
        let off = off.to_integer().to_biguint().ok_or_else(bad)?;
        Ok(Self { gen: gen as u32, off })
    }
}

/// A dyadic rectangle `I × J`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RectRepr", into = "RectRepr")]
pub struct DyadicRect {
    pub x: DyadicInterval,
    pub y: DyadicInterval,
}

impl DyadicRect {
    pub fn new(x: DyadicInterval, y: DyadicInterval) -> Self {
        Self { x, y }
    }

    pub fn from_parts(gen_x: u32, off_x: u64, gen_y: u32, off_y: u64) -> Result<Self> {
        Ok(Self::new(DyadicInterval::new(gen_x, off_x)?, DyadicInterval::new(gen_y, off_y)?))
    }

    /// `[0, 2^-a] × [0, 2^-b]`.
    pub fn corner(a: u32, b: u32) -> Self {
        Self::new(DyadicInterval::corner(a), DyadicInterval::corner(b))
    }

    /// Upper right quadrant `R^{++}`.
    pub fn quadrant(&self) -> Self {
        Self::new(self.x.upper_half(), self.y.upper_half())
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.x.contains(&other.x) && self.y.contains(&other.y)
    }

    /// `m₂(R) = 2^-(gen_x + gen_y)`.
    pub fn area(&self) -> f64 {
        0.5f64.powi((self.x.gen + self.y.gen) as i32)
    }

    pub fn is_corner(&self) -> bool {
        self.x.off.is_zero() && self.y.off.is_zero()
    }

    pub fn corner_levels(&self) -> (u32, u32) {
        (self.x.corner_level(), self.y.corner_level())
    }

    pub fn address(&self) -> Option<RectAddress> {
        Some(RectAddress {
            gen_x: self.x.gen,
            off_x: self.x.off.to_usize()?,
            gen_y: self.y.gen,
            off_y: self.y.off.to_usize()?,
        })
    }

    pub fn index_in(&self, topo: &BiTreeTopology) -> Option<usize> {
        topo.index_of(self.address()?)
    }

    pub fn from_index(topo: &BiTreeTopology, index: usize) -> Self {
        let a = topo.address(index);
        Self::new(
            DyadicInterval { gen: a.gen_x, off: a.off_x.into() },
            DyadicInterval { gen: a.gen_y, off: a.off_y.into() },
        )
    }
}

impl fmt::Display for DyadicRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.x.endpoints();
        let (c, d) = self.y.endpoints();
        write!(f, "[{a},{b}]x[{c},{d}]")
    }
}

/// Parses `[a,b]x[c,d]` with rational endpoints such as `1/4`.
impl FromStr for DyadicRect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = |m: &str| Error::Parse {
            path: "rect".into(),
            message: format!("{m}: {s:?}"),
        };
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (xs, ys) = compact
            .split_once("]x[")
            .ok_or_else(|| err("expected [a,b]x[c,d]"))?;
        let xs = xs.strip_prefix('[').ok_or_else(|| err("missing '['"))?;
        let ys = ys.strip_suffix(']').ok_or_else(|| err("missing ']'"))?;
        let interval = |t: &str| -> Result<DyadicInterval> {
            let (a, b) = t.split_once(',').ok_or_else(|| err("expected two endpoints"))?;
            let a: BigRational = a.parse().map_err(|_| err("bad endpoint"))?;
            let b: BigRational = b.parse().map_err(|_| err("bad endpoint"))?;
            DyadicInterval::from_endpoints(&a, &b)
        };
        Ok(Self::new(interval(xs)?, interval(ys)?))
    }
}

#[derive(Serialize, Deserialize)]
struct RectRepr {
    gen_x: u32,
    off_x: String,
    gen_y: u32,
    off_y: String,
}

impl From<DyadicRect> for RectRepr {
    fn from(r: DyadicRect) -> Self {
        Self {
            gen_x: r.x.gen,
            off_x: r.x.off.to_string(),
            gen_y: r.y.gen,
            off_y: r.y.off.to_string(),
        }
    }
}

impl TryFrom<RectRepr> for DyadicRect {
    type Error = Error;

    fn try_from(r: RectRepr) -> Result<Self> {
        let off = |s: &str| {
            s.parse::<BigUint>()
                .map_err(|_| Error::Parameter(format!("offset {s:?} is not a nonnegative integer")))
        };
        Ok(Self::new(
            DyadicInterval::new(r.gen_x, off(&r.off_x)?)?,
            DyadicInterval::new(r.gen_y, off(&r.off_y)?)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_round_trip() {
        let r: DyadicRect = "[1/4, 1/2] x [0, 1]".parse().unwrap();
        assert_eq!(r, DyadicRect::from_parts(2, 1, 0, 0).unwrap());
        assert_eq!(r.to_string(), "[1/4,1/2]x[0,1]");
        assert_eq!(r.to_string().parse::<DyadicRect>().unwrap(), r);
    }

    #[test]
    fn non_dyadic_input_is_rejected() {
        for s in ["[0,1/3]x[0,1]", "[1/4,3/4]x[0,1]", "[1/2,1]x[0,2]", "[0,1]", "[1/2,1/4]x[0,1]"] {
            assert!(matches!(s.parse::<DyadicRect>(), Err(Error::Parse { .. })), "{s}");
        }
    }

    #[test]
    fn containment_and_corner_levels() {
        let q = DyadicRect::corner(2, 3);
        let quad = q.quadrant();
        assert!(q.contains(&quad));
        assert!(!quad.contains(&q));
        assert_eq!(quad.corner_levels(), (2, 3));
        assert_eq!(quad.x.off, BigUint::from(1u32));
        assert_eq!(DyadicInterval::corner(1).overlap_fraction(&DyadicInterval::corner(0)), 0.5);
        assert_eq!(quad.x.overlap_fraction(&DyadicInterval::corner(3)), 0.0);
    }

    #[test]
    fn json_uses_decimal_offsets() {
        let off = BigUint::one() << 200usize;
        let r = DyadicRect::new(DyadicInterval::new(201, off).unwrap(), DyadicInterval::corner(0));
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("1606938044258990275541962092341162602522202993782792835301376"));
        assert_eq!(serde_json::from_str::<DyadicRect>(&s).unwrap(), r);
        assert!(serde_json::from_str::<DyadicRect>(r#"{"gen_x":1,"off_x":"2","gen_y":0,"off_y":"0"}"#).is_err());
    }
}

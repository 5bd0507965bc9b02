//! The nine-label spatial relation vocabulary and its integer-offset algebra.
//!
//! A triple `(a, r, b)` reads "a is `r` of b" and fixes
//! `pos(a) - pos(b) = offset(r)`. Composition along a path sums offsets and
//! labels the result by the signs of the sum.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Neg};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelationLabel {
    Above,
    Below,
    Left,
    Right,
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
    Overlap,
}

pub const NUM_LABELS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Offset {
    pub dx: i32,
    pub dy: i32,
}

impl Offset {
    pub const fn new(dx: i32, dy: i32) -> Self {
        Offset { dx, dy }
    }
}

impl Add for Offset {
    type Output = Offset;
    fn add(self, o: Offset) -> Offset {
        Offset::new(self.dx + o.dx, self.dy + o.dy)
    }
}

impl Neg for Offset {
    type Output = Offset;
    fn neg(self) -> Offset {
        Offset::new(-self.dx, -self.dy)
    }
}

impl Sum for Offset {
    fn sum<I: Iterator<Item = Offset>>(iter: I) -> Offset {
        iter.fold(Offset::default(), Add::add)
    }
}

impl RelationLabel {
    pub const ALL: [RelationLabel; NUM_LABELS] = [
        RelationLabel::Above,
        RelationLabel::Below,
        RelationLabel::Left,
        RelationLabel::Right,
        RelationLabel::UpperLeft,
        RelationLabel::UpperRight,
        RelationLabel::LowerLeft,
        RelationLabel::LowerRight,
        RelationLabel::Overlap,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn offset(self) -> Offset {
        use RelationLabel::*;
        match self {
            Above => Offset::new(0, 1),
            Below => Offset::new(0, -1),
            Left => Offset::new(-1, 0),
            Right => Offset::new(1, 0),
            UpperLeft => Offset::new(-1, 1),
            UpperRight => Offset::new(1, 1),
            LowerLeft => Offset::new(-1, -1),
            LowerRight => Offset::new(1, -1),
            Overlap => Offset::new(0, 0),
        }
    }

    /// Label for the signs of an arbitrary offset; `(-2, 1)` maps to upper-left.
    pub fn from_offset(o: Offset) -> Self {
        use RelationLabel::*;
        match (o.dx.signum(), o.dy.signum()) {
            (0, 1) => Above,
            (0, -1) => Below,
            (-1, 0) => Left,
            (1, 0) => Right,
            (-1, 1) => UpperLeft,
            (1, 1) => UpperRight,
            (-1, -1) => LowerLeft,
            (1, -1) => LowerRight,
            _ => Overlap,
        }
    }

    pub fn inverse(self) -> Self {
        Self::from_offset(-self.offset())
    }

    pub fn as_str(self) -> &'static str {
        use RelationLabel::*;
        match self {
            Above => "above",
            Below => "below",
            Left => "left",
            Right => "right",
            UpperLeft => "upper-left",
            UpperRight => "upper-right",
            LowerLeft => "lower-left",
            LowerRight => "lower-right",
            Overlap => "overlap",
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Ground-truth composition of a chain of atomic relations.
pub fn oracle_compose(labels: &[RelationLabel]) -> Result<RelationLabel> {
    if labels.is_empty() {
        return Err(Error::Argument("cannot compose an empty relation chain".into()));
    }
    Ok(RelationLabel::from_offset(labels.iter().map(|l| l.offset()).sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelationLabel::*;

    #[test]
    fn offsets_are_a_bijection() {
        let mut seen = std::collections::HashSet::new();
        for l in RelationLabel::ALL {
            assert!(seen.insert(l.offset()));
            assert_eq!(RelationLabel::from_offset(l.offset()), l);
            assert_eq!(RelationLabel::from_index(l.index()), Some(l));
            assert_eq!(l.as_str().parse::<RelationLabel>().unwrap(), l);
        }
    }

    #[test]
    fn inverse_negates_offset() {
        for l in RelationLabel::ALL {
            assert_eq!(l.inverse().offset(), -l.offset());
            assert_eq!(oracle_compose(&[l, l.inverse()]).unwrap(), Overlap);
        }
    }

    #[test]
    fn compose_examples() {
        assert_eq!(oracle_compose(&[Left]).unwrap(), Left);
        assert_eq!(oracle_compose(&[Left, Above]).unwrap(), UpperLeft);
        assert_eq!(oracle_compose(&[Left, Right]).unwrap(), Overlap);
        assert_eq!(oracle_compose(&[Left, Left]).unwrap(), Left);
        assert_eq!(oracle_compose(&[Left, Left, Above]).unwrap(), UpperLeft);
        assert!(oracle_compose(&[]).is_err());
    }

    #[test]
    fn serde_uses_kebab_case() {
        assert_eq!(serde_json::to_string(&UpperLeft).unwrap(), "\"upper-left\"");
        assert_eq!(serde_json::from_str::<RelationLabel>("\"overlap\"").unwrap(), Overlap);
    }
}

use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

/// Length unit that a configuration's numbers are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Mm,
    M,
}

impl Unit {
    /// Size of one unit in millimetres.
    pub fn in_mm(self) -> f64 {
        match self {
            Unit::Mm => 1.0,
            Unit::M => 1000.0,
        }
    }

    /// Factor converting a length in `self` to a length in `to`.
    pub fn factor_to(self, to: Unit) -> f64 {
        if self == to {
            1.0
        } else {
            self.in_mm() / to.in_mm()
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Mm => "mm",
            Unit::M => "m",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mm" => Ok(Unit::Mm),
            "m" => Ok(Unit::M),
            other => Err(format!("unknown unit `{other}` (expected mm or m)")),
        }
    }
}

/// Physical dimension as a power of length. Angles and joint rates of
/// rotational actuators are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dim(pub i32);

impl Dim {
    pub const ONE: Dim = Dim(0);
    pub const LENGTH: Dim = Dim(1);
    pub const INV_LENGTH: Dim = Dim(-1);

    pub fn inv(self) -> Dim {
        Dim(-self.0)
    }
}

impl Mul for Dim {
    type Output = Dim;

    fn mul(self, rhs: Dim) -> Dim {
        Dim(self.0 + rhs.0)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("1"),
            1 => f.write_str("length"),
            -1 => f.write_str("1/length"),
            p if p > 0 => write!(f, "length^{p}"),
            p => write!(f, "1/length^{}", -p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_factors() {
        assert_eq!(Unit::Mm.factor_to(Unit::M), 0.001);
        assert_eq!(Unit::M.factor_to(Unit::Mm), 1000.0);
        assert_eq!(Unit::M.factor_to(Unit::M), 1.0);
        assert_eq!("m".parse::<Unit>().unwrap(), Unit::M);
        assert!("cm".parse::<Unit>().is_err());
    }

    #[test]
    fn dim_algebra() {
        assert_eq!(Dim::LENGTH * Dim::INV_LENGTH, Dim::ONE);
        assert_eq!(Dim::LENGTH.inv(), Dim::INV_LENGTH);
        assert_eq!(Dim::ONE.to_string(), "1");
        assert_eq!(Dim(2).to_string(), "length^2");
        assert_eq!(Dim(-1).to_string(), "1/length");
    }
}

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul};

/// Energy in whole watt-hours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyWh(pub u64);

impl EnergyWh {
    pub const ZERO: EnergyWh = EnergyWh(0);

    pub fn wh(self) -> u64 {
        self.0
    }

    /// Exact conversion to kWh.
    pub fn kwh(self) -> Decimal {
        Decimal::from_i128_with_scale(i128::from(self.0), 3)
    }

    pub fn checked_sub(self, rhs: EnergyWh) -> Option<EnergyWh> {
        self.0.checked_sub(rhs.0).map(EnergyWh)
    }
}

impl Add for EnergyWh {
    type Output = EnergyWh;
    fn add(self, rhs: EnergyWh) -> EnergyWh {
        EnergyWh(self.0 + rhs.0)
    }
}

impl AddAssign for EnergyWh {
    fn add_assign(&mut self, rhs: EnergyWh) {
        self.0 += rhs.0;
    }
}

impl Sum for EnergyWh {
    fn sum<I: Iterator<Item = EnergyWh>>(iter: I) -> EnergyWh {
        EnergyWh(iter.map(|e| e.0).sum())
    }
}

impl<'a> Sum<&'a EnergyWh> for EnergyWh {
    fn sum<I: Iterator<Item = &'a EnergyWh>>(iter: I) -> EnergyWh {
        iter.copied().sum()
    }
}

impl fmt::Display for EnergyWh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Wh", self.0)
    }
}

/// Fractional digits kept for currency amounts between report boundaries.
pub const EUR_INTERNAL_DECIMALS: u32 = 6;

/// A euro amount held at six fractional digits.
///
/// Values are rounded half-even when constructed; [`Eur::cents`] does the
/// final rounding for display.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Eur(Decimal);

impl Eur {
    pub const ZERO: Eur = Eur(Decimal::ZERO);

    pub fn new(value: Decimal) -> Self {
        let mut v =
            value.round_dp_with_strategy(EUR_INTERNAL_DECIMALS, RoundingStrategy::MidpointNearestEven);
        v.rescale(EUR_INTERNAL_DECIMALS);
        Eur(v)
    }

    pub fn value(self) -> Decimal {
        self.0
    }

    pub fn cents(self) -> Decimal {
        let mut v = self.0.round_dp_with_strategy(2, RoundingStrategy::MidpointNearestEven);
        v.rescale(2);
        v
    }
}

impl Add for Eur {
    type Output = Eur;
    fn add(self, rhs: Eur) -> Eur {
        Eur(self.0 + rhs.0)
    }
}

impl Sum for Eur {
    fn sum<I: Iterator<Item = Eur>>(iter: I) -> Eur {
        iter.fold(Eur::ZERO, Add::add)
    }
}

impl Mul<Decimal> for Eur {
    type Output = Eur;
    fn mul(self, rhs: Decimal) -> Eur {
        Eur::new(self.0 * rhs)
    }
}

impl fmt::Display for Eur {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} EUR", self.0)
    }
}

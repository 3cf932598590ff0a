//! The textbook restriction systems used by the test suite and by
//! `wald reproduce`.

use crate::error::Result;
use crate::parser::{parse_polynomial, parse_system};
use crate::polymatrix::PolyMatrix;
use crate::system::RestrictionSystem;

/// A named system together with the analysis outcome expected at its null
/// point.
#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub name: &'static str,
    pub source: &'static str,
    pub expect_cldr: bool,
}

impl Fixture {
    pub fn system(&self) -> Result<RestrictionSystem> {
        parse_system(self.source)
    }
}

pub const SQUARE: Fixture = Fixture {
    name: "square",
    source: "p=1 q=1\nt1^2\ntheta_bar= 0",
    expect_cldr: true,
};

pub const PRODUCT_ORIGIN: Fixture = Fixture {
    name: "product-origin",
    source: "p=2 q=1\nt1*t2\ntheta_bar= 0 0",
    expect_cldr: true,
};

pub const PRODUCT_AXIS: Fixture = Fixture {
    name: "product-axis",
    source: "p=2 q=1\nt1*t2\ntheta_bar= 1 0",
    expect_cldr: true,
};

pub const SUM_OF_SQUARES_2: Fixture = Fixture {
    name: "sum-of-squares-2",
    source: "p=2 q=1\nt1^2 + t2^2\ntheta_bar= 0 0",
    expect_cldr: true,
};

pub const SUM_OF_SQUARES_3: Fixture = Fixture {
    name: "sum-of-squares-3",
    source: "p=3 q=1\nt1^2 + t2^2 + t3^2\ntheta_bar= 0 0 0",
    expect_cldr: true,
};

pub const STACKED_ORIGIN: Fixture = Fixture {
    name: "stacked-origin",
    source: "p=2 q=2\nt1^2\nt1*t2^2\ntheta_bar= 0 0",
    expect_cldr: true,
};

pub const STACKED_AXIS: Fixture = Fixture {
    name: "stacked-axis",
    source: "p=2 q=2\nt1^2\nt1*t2^2\ntheta_bar= 0 1",
    expect_cldr: false,
};

pub const CUBIC_PAIRS: Fixture = Fixture {
    name: "cubic-pairs",
    source: "p=4 q=3\nt1^2 + t3^3\nt2^2 + t4^3\nt1^2 + t2^2\ntheta_bar= 0 0 0 0",
    expect_cldr: true,
};

pub const ALL: [Fixture; 8] = [
    SQUARE,
    PRODUCT_ORIGIN,
    PRODUCT_AXIS,
    SUM_OF_SQUARES_2,
    SUM_OF_SQUARES_3,
    STACKED_ORIGIN,
    STACKED_AXIS,
    CUBIC_PAIRS,
];

pub fn by_name(name: &str) -> Option<Fixture> {
    ALL.iter().copied().find(|f| f.name == name)
}

/// A 2x2 polynomial matrix that is not the Jacobian of any system: every
/// sharing of the orders loses rank in the limit.
pub fn unshareable_matrix() -> PolyMatrix {
    let rows = [["t1", "0"], ["(1 + t2)^2", "t1*(1 + t2)"]]
        .iter()
        .map(|r| r.iter().map(|e| parse_polynomial(e, 2).expect("valid entry")).collect())
        .collect();
    PolyMatrix::from_rows(2, rows).expect("2x2 matrix")
}

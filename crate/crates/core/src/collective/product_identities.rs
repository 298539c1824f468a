//! Tabulated bosonizations of collective three-level superoperators.
//!
//! Each row states `Σ_μ U^{(μ)} ρ V^{(μ)} = Σ c · Ă^{ab,cd} ρ`. Ladder rows
//! hold for both signs: `Same(ij)` stands for `σ₊^{ij}` in the `+` identity
//! and `σ₋^{ij}` in the `−` one, `Flipped(ij)` for the opposite, and a right
//! hand side term flagged `true` carries the identity's own sign. Cartan rows
//! use `σ₃^{ij} = ½(|j⟩⟨j| − |i⟩⟨i|)` and `Ă₃` on the right.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{assemble, bosonize, ladder, HopTermList, Ladder};
use crate::basis::SymBasis;
use crate::error::Result;
use crate::liouville::{left_right_supermatrix, Operator};

#[derive(Clone, Copy, Debug)]
pub(super) enum Factor {
    Identity,
    Same(&'static str),
    Flipped(&'static str),
    Cartan(&'static str),
}

#[derive(Clone, Copy, Debug)]
pub(super) struct Row {
    left: Factor,
    right: Factor,
    rhs: &'static [(f64, &'static str, bool)],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
    Three,
}

/// One checked identity: `left`, `right` and the bosonized right hand side.
#[derive(Clone, Debug)]
pub struct Identity {
    pub label: String,
    pub left: Operator,
    pub right: Operator,
    pub rhs: HopTermList,
}

fn levels_of(label: &str) -> (usize, usize) {
    let b = label.as_bytes();
    ((b[0] - b'0') as usize, (b[1] - b'0') as usize)
}

fn sigma(label: &str, sign: Sign) -> Operator {
    let (i, j) = levels_of(label);
    match sign {
        Sign::Plus => Operator::dyad(3, i, j),
        Sign::Minus => Operator::dyad(3, j, i),
        Sign::Three => (&Operator::dyad(3, j, j) - &Operator::dyad(3, i, i)).scale(C64::new(0.5, 0.0)),
    }
}

fn flip(sign: Sign) -> Sign {
    match sign {
        Sign::Plus => Sign::Minus,
        Sign::Minus => Sign::Plus,
        Sign::Three => Sign::Three,
    }
}

fn factor(f: Factor, sign: Sign) -> Operator {
    match f {
        Factor::Identity => Operator::identity(3),
        Factor::Same(l) => sigma(l, sign),
        Factor::Flipped(l) => sigma(l, flip(sign)),
        Factor::Cartan(l) => sigma(l, Sign::Three),
    }
}

fn describe(f: Factor, sign: Sign) -> String {
    let s = |x: Sign| match x {
        Sign::Plus => "+",
        Sign::Minus => "-",
        Sign::Three => "3",
    };
    match f {
        Factor::Identity => "1".into(),
        Factor::Same(l) => format!("s{}^{l}", s(sign)),
        Factor::Flipped(l) => format!("s{}^{l}", s(flip(sign))),
        Factor::Cartan(l) => format!("s3^{l}"),
    }
}

fn build(row: &Row, sign: Sign) -> Result<Identity> {
    let mut rhs = HopTermList::empty(3);
    for &(c, pair, same) in row.rhs {
        let (a, b) = pair.split_once(',').expect("slot pair label");
        let kind = match if same { sign } else { flip(sign) } {
            Sign::Plus => Ladder::Raise,
            Sign::Minus => Ladder::Lower,
            Sign::Three => Ladder::Cartan,
        };
        let term = ladder(3, kind, levels_of(a), levels_of(b))?;
        rhs = rhs.add_scaled(&term, C64::new(c, 0.0))?;
    }
    Ok(Identity {
        label: format!("{} rho {}", describe(row.left, sign), describe(row.right, sign)),
        left: factor(row.left, sign),
        right: factor(row.right, sign),
        rhs,
    })
}

/// All tabulated identities: both signs of every ladder row, then the
/// Cartan rows.
pub fn identities() -> Result<Vec<Identity>> {
    let mut out = Vec::new();
    for row in LADDER_ROWS {
        out.push(build(row, Sign::Plus)?);
        out.push(build(row, Sign::Minus)?);
    }
    for row in CARTAN_ROWS {
        out.push(build(row, Sign::Three)?);
    }
    Ok(out)
}

/// Max-entry difference between the bosonized left hand side and the
/// tabulated right hand side on `basis`.
pub fn residual(id: &Identity, basis: &Arc<SymBasis>) -> Result<f64> {
    let lhs = assemble(&bosonize(&left_right_supermatrix(&id.left, &id.right)?), basis)?;
    let rhs = assemble(&id.rhs, basis)?;
    Ok(lhs.sub(&rhs)?.max_abs())
}

pub(super) const LADDER_ROWS: &[Row] = &[
    Row {
        left: Factor::Identity,
        right: Factor::Same("10"),
        rhs: &[(1.0, "11,10", false), (1.0, "01,00", false), (1.0, "21,20", false)],
    },
    Row {
        left: Factor::Same("10"),
        right: Factor::Identity,
        rhs: &[(1.0, "12,02", true), (1.0, "11,01", true), (1.0, "10,00", true)],
    },
    Row {
        left: Factor::Identity,
        right: Factor::Same("21"),
        rhs: &[(1.0, "22,21", false), (1.0, "12,11", false), (1.0, "02,01", false)],
    },
    Row {
        left: Factor::Same("21"),
        right: Factor::Identity,
        rhs: &[(1.0, "21,11", true), (1.0, "20,10", true), (1.0, "22,12", true)],
    },
    Row {
        left: Factor::Same("20"),
        right: Factor::Identity,
        rhs: &[(1.0, "21,01", true), (1.0, "20,00", true), (1.0, "22,02", true)],
    },
    Row {
        left: Factor::Identity,
        right: Factor::Same("20"),
        rhs: &[(1.0, "22,20", false), (1.0, "12,10", false), (1.0, "02,00", false)],
    },
    Row { left: Factor::Same("20"), right: Factor::Cartan("02"), rhs: &[(0.5, "22,02", true), (-0.5, "20,00", true)] },
    Row {
        left: Factor::Cartan("02"),
        right: Factor::Same("20"),
        rhs: &[(0.5, "22,20", false), (-0.5, "02,00", false)],
    },
    Row { left: Factor::Same("21"), right: Factor::Cartan("02"), rhs: &[(0.5, "22,12", true), (-0.5, "20,10", true)] },
    Row {
        left: Factor::Cartan("02"),
        right: Factor::Same("21"),
        rhs: &[(0.5, "22,21", false), (-0.5, "02,01", false)],
    },
    Row { left: Factor::Same("21"), right: Factor::Flipped("21"), rhs: &[(1.0, "22,11", true)] },
    Row { left: Factor::Same("21"), right: Factor::Flipped("20"), rhs: &[(1.0, "22,10", true)] },
    Row { left: Factor::Same("20"), right: Factor::Flipped("21"), rhs: &[(1.0, "22,01", true)] },
    Row { left: Factor::Same("20"), right: Factor::Flipped("20"), rhs: &[(1.0, "22,00", true)] },
    Row { left: Factor::Same("21"), right: Factor::Same("21"), rhs: &[(1.0, "21,12", true)] },
    Row { left: Factor::Same("21"), right: Factor::Flipped("10"), rhs: &[(1.0, "21,10", true)] },
    Row { left: Factor::Same("20"), right: Factor::Same("21"), rhs: &[(1.0, "21,02", true)] },
    Row { left: Factor::Same("20"), right: Factor::Flipped("10"), rhs: &[(1.0, "21,00", true)] },
    Row { left: Factor::Same("21"), right: Factor::Same("20"), rhs: &[(1.0, "20,12", true)] },
    Row { left: Factor::Same("21"), right: Factor::Same("10"), rhs: &[(1.0, "20,11", true)] },
    Row { left: Factor::Same("10"), right: Factor::Cartan("02"), rhs: &[(0.5, "12,02", true), (-0.5, "10,00", true)] },
    Row {
        left: Factor::Cartan("02"),
        right: Factor::Same("10"),
        rhs: &[(0.5, "21,20", false), (-0.5, "01,00", false)],
    },
    Row { left: Factor::Same("10"), right: Factor::Cartan("12"), rhs: &[(0.5, "12,02", true), (-0.5, "11,01", true)] },
    Row {
        left: Factor::Cartan("12"),
        right: Factor::Same("10"),
        rhs: &[(0.5, "21,20", false), (-0.5, "11,10", false)],
    },
    Row {
        left: Factor::Cartan("12"),
        right: Factor::Same("20"),
        rhs: &[(0.5, "22,20", false), (-0.5, "12,10", false)],
    },
    Row { left: Factor::Same("20"), right: Factor::Cartan("12"), rhs: &[(0.5, "22,02", true), (-0.5, "21,01", true)] },
    Row {
        left: Factor::Cartan("12"),
        right: Factor::Same("21"),
        rhs: &[(0.5, "22,21", false), (-0.5, "12,11", false)],
    },
    Row { left: Factor::Same("21"), right: Factor::Cartan("12"), rhs: &[(0.5, "22,12", true), (-0.5, "21,11", true)] },
    Row { left: Factor::Same("20"), right: Factor::Same("20"), rhs: &[(1.0, "20,02", true)] },
    Row { left: Factor::Same("20"), right: Factor::Same("10"), rhs: &[(1.0, "20,01", true)] },
    Row { left: Factor::Same("10"), right: Factor::Flipped("21"), rhs: &[(1.0, "12,01", true)] },
    Row { left: Factor::Same("10"), right: Factor::Flipped("20"), rhs: &[(1.0, "12,00", true)] },
    Row { left: Factor::Same("10"), right: Factor::Same("21"), rhs: &[(1.0, "11,02", true)] },
    Row { left: Factor::Same("10"), right: Factor::Flipped("10"), rhs: &[(1.0, "11,00", true)] },
    Row { left: Factor::Same("10"), right: Factor::Same("20"), rhs: &[(1.0, "10,02", true)] },
    Row { left: Factor::Same("10"), right: Factor::Same("10"), rhs: &[(1.0, "10,01", true)] },
];

pub(super) const CARTAN_ROWS: &[Row] = &[
    Row {
        left: Factor::Cartan("12"),
        right: Factor::Cartan("02"),
        rhs: &[
            (-0.5, "21,01", true),
            (-0.5, "20,10", true),
            (0.5, "11,02", true),
            (0.5, "02,01", true),
            (0.5, "22,11", true),
            (0.5, "21,12", true),
        ],
    },
    Row {
        left: Factor::Identity,
        right: Factor::Cartan("02"),
        rhs: &[
            (-1.0, "21,01", true),
            (-1.0, "20,10", true),
            (2.0, "12,10", true),
            (1.0, "02,01", true),
            (1.0, "22,00", true),
            (1.0, "21,12", true),
        ],
    },
    Row {
        left: Factor::Cartan("02"),
        right: Factor::Cartan("12"),
        rhs: &[(-0.5, "21,01", true), (0.5, "11,02", true), (0.5, "22,11", true)],
    },
    Row {
        left: Factor::Cartan("12"),
        right: Factor::Identity,
        rhs: &[(1.0, "20,10", true), (1.0, "22,11", true), (1.0, "21,12", true)],
    },
    Row {
        left: Factor::Cartan("02"),
        right: Factor::Identity,
        rhs: &[
            (2.0, "21,01", true),
            (1.0, "20,10", true),
            (-1.0, "12,10", true),
            (-1.0, "02,01", true),
            (1.0, "22,00", true),
            (-1.0, "21,12", true),
        ],
    },
    Row {
        left: Factor::Identity,
        right: Factor::Cartan("12"),
        rhs: &[(1.0, "02,01", true), (1.0, "22,11", true), (-1.0, "21,12", true)],
    },
    Row {
        left: Factor::Cartan("12"),
        right: Factor::Cartan("12"),
        rhs: &[
            (-1.0, "21,01", true),
            (1.0, "11,02", true),
            (1.0, "02,01", true),
            (0.5, "22,11", true),
            (0.5, "21,12", true),
        ],
    },
    Row {
        left: Factor::Cartan("02"),
        right: Factor::Cartan("02"),
        rhs: &[
            (0.5, "12,10", true),
            (0.5, "02,01", true),
            (0.5, "21,12", true),
            (-0.5, "21,01", true),
            (-0.5, "20,10", true),
            (-0.5, "22,00", true),
            (1.0, "11,02", true),
            (1.0, "22,11", true),
        ],
    },
];

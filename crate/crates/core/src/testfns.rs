//! Built-in smooth test functions with small intrinsic Lipschitz constants.

use crate::error::Result;
use crate::graph::{DomainBox, GraphFunction};
use crate::group::{Group, StandardGroup};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinPhi {
    pub name: &'static str,
    pub group: StandardGroup,
    pub expr: &'static str,
    /// The domain is [-half_width, half_width]^(m+n-1).
    pub half_width: f64,
}

impl BuiltinPhi {
    pub fn group(&self) -> Result<Group> {
        Group::standard(self.group)
    }

    pub fn domain(&self) -> DomainBox {
        let (m, mats) = self.group.matrices();
        DomainBox::cube(m - 1 + mats.len(), -self.half_width, self.half_width)
    }

    pub fn phi(&self) -> Result<GraphFunction> {
        let (m, mats) = self.group.matrices();
        GraphFunction::expr(self.expr, m, mats.len(), self.domain())
    }
}

const H1: StandardGroup = StandardGroup::Heisenberg(1);
const F3: StandardGroup = StandardGroup::FreeStep2(3);

const CATALOGUE: [BuiltinPhi; 11] = [
    BuiltinPhi { name: "h1-zero", group: H1, expr: "0", half_width: 1.0 },
    BuiltinPhi { name: "h1-linear", group: H1, expr: "x2", half_width: 1.0 },
    BuiltinPhi { name: "h1-sine", group: H1, expr: "0.5*sin(x2)", half_width: 1.0 },
    BuiltinPhi { name: "h1-vertical", group: H1, expr: "0.3*y", half_width: 1.0 },
    BuiltinPhi { name: "h1-mixed", group: H1, expr: "0.2*x2^2 + 0.1*y", half_width: 1.0 },
    BuiltinPhi { name: "h1-wave", group: H1, expr: "0.2*cos(x2 + y)", half_width: 1.0 },
    BuiltinPhi { name: "f3-zero", group: F3, expr: "0", half_width: 0.5 },
    BuiltinPhi { name: "f3-linear", group: F3, expr: "x2", half_width: 0.5 },
    BuiltinPhi { name: "f3-sine", group: F3, expr: "0.5*sin(x3)", half_width: 0.5 },
    BuiltinPhi { name: "f3-vertical", group: F3, expr: "0.2*y1 + 0.3*x2", half_width: 0.5 },
    BuiltinPhi { name: "f3-product", group: F3, expr: "0.2*x2*x3 + 0.1*y3", half_width: 0.5 },
];

pub fn builtin_test_functions() -> &'static [BuiltinPhi] {
    &CATALOGUE
}

pub fn builtin(name: &str) -> Option<BuiltinPhi> {
    CATALOGUE.iter().copied().find(|b| b.name == name)
}

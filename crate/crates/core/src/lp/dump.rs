//! Plain-text coefficient listings for cross-checking against other solvers.

use alloc::string::String;
use core::fmt::Write;

use super::{LinearProgram, Relation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DumpFormat {
    /// One `row col value` line per constraint nonzero.
    #[default]
    Triplets,
    /// Triplets plus `obj`, `rhs` and `bound` lines describing the rest of the program.
    Full,
}

pub fn dump_coefficients(lp: &LinearProgram, format: DumpFormat) -> String {
    let mut out = String::new();
    if format == DumpFormat::Full {
        for (j, c) in lp.objective().iter().enumerate() {
            if *c != 0.0 {
                let _ = writeln!(out, "obj {j} {c:e}");
            }
        }
    }
    for (i, row) in lp.rows().iter().enumerate() {
        for &(j, a) in &row.coeffs {
            let _ = writeln!(out, "{i} {j} {a:e}");
        }
    }
    if format == DumpFormat::Full {
        for (i, row) in lp.rows().iter().enumerate() {
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Ge => ">=",
                Relation::Eq => "=",
            };
            let _ = writeln!(out, "rhs {i} {rel} {:e} {:?}", row.rhs, row.group);
        }
        for (j, (l, u)) in lp.lower().iter().zip(lp.upper()).enumerate() {
            let _ = writeln!(out, "bound {j} {l:e} {u:e}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::RowGroup;
    use alloc::vec;

    #[test]
    fn one_line_per_nonzero() {
        let mut lp = LinearProgram::new(3);
        lp.add_row(vec![(0, 1.0), (2, -2.5)], Relation::Le, 1.0, RowGroup::SharedCap);
        lp.add_row(vec![(1, 4.0)], Relation::Ge, 0.0, RowGroup::NonNeg(0));
        let text = dump_coefficients(&lp, DumpFormat::Triplets);
        assert_eq!(text, "0 0 1e0\n0 2 -2.5e0\n1 1 4e0\n");
        let full = dump_coefficients(&lp, DumpFormat::Full);
        assert!(full.contains("rhs 1 >= 0e0 NonNeg(0)"));
        assert_eq!(full.lines().filter(|l| l.starts_with("bound")).count(), 3);
    }
}

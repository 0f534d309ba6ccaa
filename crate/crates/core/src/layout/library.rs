//! Built-in designs, stored as native layout documents under `builtins/`.
//!
//! Coordinates are on the 20 nm grid. The reversible gates and the
//! half-adder are reconstructions and carry the `reconstruction` flag.

use super::format::parse_layout;
use super::{Layout, LayoutError};

pub const BUILTIN_NAMES: &[&str] = &[
    "wire8",
    "inverter",
    "or_std",
    "and_std",
    "maj_std",
    "or_rev",
    "and_rev",
    "maj_rev",
    "half_adder_rev",
];

/// Names whose expected logic must be injective.
pub const REVERSIBLE_NAMES: &[&str] = &["or_rev", "and_rev", "maj_rev", "half_adder_rev"];

fn source(name: &str) -> Option<&'static str> {
    Some(match name {
        "wire8" => include_str!("builtins/wire8.qca"),
        "inverter" => include_str!("builtins/inverter.qca"),
        "or_std" => include_str!("builtins/or_std.qca"),
        "and_std" => include_str!("builtins/and_std.qca"),
        "maj_std" => include_str!("builtins/maj_std.qca"),
        "or_rev" => include_str!("builtins/or_rev.qca"),
        "and_rev" => include_str!("builtins/and_rev.qca"),
        "maj_rev" => include_str!("builtins/maj_rev.qca"),
        "half_adder_rev" => include_str!("builtins/half_adder_rev.qca"),
        _ => return None,
    })
}

pub fn builtin_circuit(name: &str) -> Result<Layout, LayoutError> {
    let text = source(name).ok_or_else(|| LayoutError::UnknownCircuit(name.to_string()))?;
    // The embedded documents are checked by the tests below, so a parse
    // failure here is a packaging bug.
    Ok(parse_layout(text).unwrap_or_else(|e| panic!("built-in `{name}` is malformed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{bits_to_index, CellRole};

    #[test]
    fn every_builtin_parses_with_total_logic() {
        for name in BUILTIN_NAMES {
            let l = builtin_circuit(name).unwrap();
            assert_eq!(l.name(), *name);
            let logic = l.expected_logic().expect("built-ins carry expected logic");
            assert!(logic.is_total(), "{name}");
            let mut inputs: Vec<&str> = logic.inputs().iter().map(String::as_str).collect();
            inputs.sort_unstable();
            assert_eq!(inputs, l.input_labels(), "{name}");
        }
    }

    #[test]
    fn reversible_builtins_are_injective() {
        for name in REVERSIBLE_NAMES {
            let l = builtin_circuit(name).unwrap();
            assert!(l.expected_logic().unwrap().is_injective(), "{name}");
        }
        // The lossy gates are not.
        for name in ["or_std", "and_std", "maj_std"] {
            let l = builtin_circuit(name).unwrap();
            assert!(!l.expected_logic().unwrap().is_injective(), "{name}");
        }
    }

    #[test]
    fn reconstruction_flags() {
        for name in BUILTIN_NAMES {
            let l = builtin_circuit(name).unwrap();
            assert_eq!(l.is_reconstruction(), REVERSIBLE_NAMES.contains(name), "{name}");
        }
    }

    #[test]
    fn and_rev_is_or_rev_with_fixed_flipped() {
        let or = builtin_circuit("or_rev").unwrap();
        let and = builtin_circuit("and_rev").unwrap();
        assert_eq!(or.len(), and.len());
        let mut diffs = 0;
        for (a, b) in or.cells().iter().zip(and.cells()) {
            assert_eq!((a.x, a.y, a.layer, a.zone), (b.x, b.y, b.layer, b.zone));
            if a.role != b.role {
                diffs += 1;
                assert!(matches!(a.role, CellRole::Fixed(p) if p.bit()));
                assert!(matches!(b.role, CellRole::Fixed(p) if !p.bit()));
            }
        }
        assert_eq!(diffs, 1);
    }

    #[test]
    fn wire8_shape() {
        let l = builtin_circuit("wire8").unwrap();
        assert_eq!(l.len(), 9);
        let inputs = l.cells().iter().filter(|c| matches!(c.role, CellRole::Input(_))).count();
        let free = l.cells().iter().filter(|c| c.role.is_free()).count();
        assert_eq!((inputs, free), (1, 8));
        let zones: Vec<u8> = l.cells()[1..].iter().map(|c| c.zone.index()).collect();
        assert_eq!(zones, [0, 0, 1, 1, 2, 2, 3, 3]);
    }

    #[test]
    fn majority_example_row() {
        let l = builtin_circuit("maj_std").unwrap();
        let logic = l.expected_logic().unwrap();
        let out = logic.lookup(&[false, true, true]).unwrap();
        assert_eq!(out, [true]);
        assert_eq!(bits_to_index(&[false, true, true]), 3);
    }

    #[test]
    fn half_adder_truth() {
        let l = builtin_circuit("half_adder_rev").unwrap();
        let logic = l.expected_logic().unwrap();
        let labels: Vec<&str> = logic.outputs().iter().map(String::as_str).collect();
        assert_eq!(labels, ["sum", "carry", "a_cp", "b_cp", "g1", "g2"]);
        for a in [false, true] {
            for b in [false, true] {
                let out = logic.lookup(&[a, b]).unwrap();
                assert_eq!(out[0], a ^ b);
                assert_eq!(out[1], a & b);
                assert_eq!((out[2], out[3]), (a, b));
            }
        }
        assert!(l.cells().iter().any(|c| c.layer == 2));
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(builtin_circuit("nand9"), Err(LayoutError::UnknownCircuit(_))));
    }
}

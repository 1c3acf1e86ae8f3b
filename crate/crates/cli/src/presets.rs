//! Named coefficient presets. The table is versioned: changing a preset
//! means a new table name, so reports stay comparable.

use spde_lab::CoefficientSet;

pub const PRESET_TABLE: &str = "presets-v1";

pub const PRESETS: [(&str, &str); 5] = [
    ("heat", "b = I, no lower-order terms, no noise"),
    ("drifted", "a1 = (0.5, 0.25), a2 = -0.5, no noise"),
    ("multiplicative", "a2 = 1, a3 = 0.5"),
    ("additive", "g = 0.5"),
    ("source-1d", "a1 = (0.5, 0), a2 = 0.3, no noise; lower part of the source problem"),
];

pub fn lookup(name: &str) -> Option<CoefficientSet> {
    let c = CoefficientSet::laplacian();
    Some(match name {
        "heat" => c,
        "drifted" => c.with_a1_const([0.5, 0.25]).with_a2_const(-0.5),
        "multiplicative" => c.with_a2_const(1.0).with_a3_const(0.5),
        "additive" => c.with_g(|_, _| 0.5),
        "source-1d" => c.with_a1_const([0.5, 0.0]).with_a2_const(0.3),
        _ => return None,
    })
}

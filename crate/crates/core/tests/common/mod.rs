#![allow(dead_code)]

use detforge_core::fcidump::parse_fcidump;
use detforge_core::Integrals;

pub const H2: &str = "h2_sto3g.fcidump";
pub const H4: &str = "h4_sto3g.fcidump";
pub const H2O: &str = "h2o_sto3g.fcidump";
pub const N2: &str = "n2_sto3g_fc_r1.10.fcidump";
pub const N2_STRETCHED: &str = "n2_sto3g_fc_r2.10.fcidump";

pub fn fixture_text(name: &str) -> String {
    let path = format!("{}/../../fixtures/{}", env!("CARGO_MANIFEST_DIR"), name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn fixture(name: &str) -> Integrals {
    parse_fcidump(&fixture_text(name)).unwrap()
}

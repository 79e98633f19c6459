//! Synthetic progression models shipped with the crate.

use super::ProgressionModel;

macro_rules! fixture {
    ($name:ident, $file:literal) => {
        pub fn $name() -> ProgressionModel {
            ProgressionModel::from_toml(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/progression/", $file)))
                .expect(concat!("bundled fixture ", $file))
        }
    };
}

fixture!(toy, "toy.toml");
fixture!(barista, "barista.toml");
fixture!(medic, "medic.toml");
fixture!(workshop, "workshop.toml");

/// Fixtures small enough for exhaustive search.
pub fn small() -> Vec<ProgressionModel> {
    vec![toy(), barista(), medic()]
}

pub fn by_name(name: &str) -> Option<ProgressionModel> {
    match name {
        "toy" => Some(toy()),
        "barista" => Some(barista()),
        "medic" => Some(medic()),
        "workshop" => Some(workshop()),
        _ => None,
    }
}

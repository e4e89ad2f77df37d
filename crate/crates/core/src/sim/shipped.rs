//! Scenarios and routes compiled into the library.

use super::scenario::{parse_scenario, Scenario, ScenarioError};

pub struct Shipped {
    pub name: &'static str,
    pub text: &'static str,
}

pub const SHIPPED: &[Shipped] = &[
    Shipped { name: "eebl", text: include_str!("../../scenarios/eebl.toml") },
    Shipped { name: "ima", text: include_str!("../../scenarios/ima.toml") },
    Shipped { name: "curbside", text: include_str!("../../scenarios/curbside.toml") },
    Shipped { name: "cca-case1", text: include_str!("../../scenarios/cca-case1.toml") },
    Shipped { name: "cca-case2", text: include_str!("../../scenarios/cca-case2.toml") },
    Shipped { name: "cca-case3", text: include_str!("../../scenarios/cca-case3.toml") },
];

const ROUTES: &[(&str, &str)] = &[
    ("routes/curbside_lead.txt", include_str!("../../scenarios/routes/curbside_lead.txt")),
    ("routes/ima_left_turn.txt", include_str!("../../scenarios/routes/ima_left_turn.txt")),
];

pub fn shipped_route(name: &str) -> Result<String, String> {
    ROUTES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| text.to_string())
        .ok_or_else(|| format!("no shipped route named {name:?}"))
}

pub fn shipped_names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|s| s.name)
}

/// Parses a shipped scenario; `None` if no scenario has that name.
pub fn shipped(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    SHIPPED
        .iter()
        .find(|s| s.name == name)
        .map(|s| parse_scenario(s.text, s.name, &shipped_route))
}

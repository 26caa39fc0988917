//! Scenario specifications bundled into the binary. A spec argument that
//! names no existing file is resolved against this set.

pub const BUNDLED: &[(&str, &str)] = &[
    ("paper-fwer15", include_str!("../assets/paper-fwer15.scenario")),
    ("paper-pfer2000", include_str!("../assets/paper-pfer2000.scenario")),
    ("fig2", include_str!("../assets/fig2.scenario")),
    ("fig2-null", include_str!("../assets/fig2-null.scenario")),
    ("lsd-k3", include_str!("../assets/lsd-k3.scenario")),
    ("lsd-k6", include_str!("../assets/lsd-k6.scenario")),
    ("snk-k5", include_str!("../assets/snk-k5.scenario")),
    ("looks-5", include_str!("../assets/looks-5.scenario")),
    ("forking-5", include_str!("../assets/forking-5.scenario")),
    ("partition-10x10", include_str!("../assets/partition-10x10.scenario")),
    ("calib-null-20", include_str!("../assets/calib-null-20.scenario")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

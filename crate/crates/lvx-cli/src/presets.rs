//! Named example presets shipped with the binary.

const PRESETS: &[(&str, &str)] = &[
    ("ex3.1", include_str!("../presets/ex3.1.ini")),
    ("ex3.3", include_str!("../presets/ex3.3.ini")),
    ("ex4.1", include_str!("../presets/ex4.1.ini")),
    ("ex4.4", include_str!("../presets/ex4.4.ini")),
    ("ex5.1", include_str!("../presets/ex5.1.ini")),
    ("ex5.2", include_str!("../presets/ex5.2.ini")),
    ("ex5.2-d3", include_str!("../presets/ex5.2-d3.ini")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

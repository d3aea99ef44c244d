//! Configs shipped with the binary.

pub const PRESETS: [(&str, &str); 10] = [
    ("verify-dt-ema", include_str!("../presets/verify-dt-ema.toml")),
    ("verify-cliff", include_str!("../presets/verify-cliff.toml")),
    ("verify-ou", include_str!("../presets/verify-ou.toml")),
    ("verify-driftless", include_str!("../presets/verify-driftless.toml")),
    ("verify-amplification", include_str!("../presets/verify-amplification.toml")),
    ("mean-cliff", include_str!("../presets/mean-cliff.toml")),
    ("bench-averaging", include_str!("../presets/bench-averaging.toml")),
    ("lqr-marginal", include_str!("../presets/lqr-marginal.toml")),
    ("lqr-marginal-mlp", include_str!("../presets/lqr-marginal-mlp.toml")),
    ("lqr-cliff", include_str!("../presets/lqr-cliff.toml")),
];

/// Verification suites and the preset each one runs.
pub const SUITES: [(&str, &str); 5] = [
    ("dt-ema", "verify-dt-ema"),
    ("cliff", "verify-cliff"),
    ("ou", "verify-ou"),
    ("driftless", "verify-driftless"),
    ("amplification", "verify-amplification"),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn suite_preset(suite: &str) -> Option<&'static str> {
    SUITES.iter().find(|(s, p)| *s == suite || *p == suite).map(|(_, p)| *p)
}

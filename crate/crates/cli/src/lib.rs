//! Command-line front end: configuration parsing and experiment dispatch.

use std::fs;
use std::path::Path;

pub mod config;
pub mod run;

use config::{ConfigError, RunConfig};

/// Configurations shipped with the binary, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("eulerian_cpmg", include_str!("../configs/eulerian_cpmg.conf")),
    ("eulerian_xy4", include_str!("../configs/eulerian_xy4.conf")),
    ("eulerian_xy8", include_str!("../configs/eulerian_xy8.conf")),
    ("fig2_cpmg_fast", include_str!("../configs/fig2_cpmg_fast.conf")),
    ("fig2_cpmg_slow", include_str!("../configs/fig2_cpmg_slow.conf")),
    ("fig2_fid", include_str!("../configs/fig2_fid.conf")),
    ("fig2_xy4_fast", include_str!("../configs/fig2_xy4_fast.conf")),
    ("fig2_xy4_slow", include_str!("../configs/fig2_xy4_slow.conf")),
    ("fig2_xy8_fast", include_str!("../configs/fig2_xy8_fast.conf")),
    ("fig2_xy8_slow", include_str!("../configs/fig2_xy8_slow.conf")),
    ("fig3_relax", include_str!("../configs/fig3_relax.conf")),
    ("fig3_relax_bare", include_str!("../configs/fig3_relax_bare.conf")),
    ("fig3_xy4_fast", include_str!("../configs/fig3_xy4_fast.conf")),
    ("fig3_xy4_slow", include_str!("../configs/fig3_xy4_slow.conf")),
    ("fig3_xy8_fast", include_str!("../configs/fig3_xy8_fast.conf")),
    ("fig3_xy8_slow", include_str!("../configs/fig3_xy8_slow.conf")),
    ("fig4_xy4_fast", include_str!("../configs/fig4_xy4_fast.conf")),
    ("fig4_xy4_slow", include_str!("../configs/fig4_xy4_slow.conf")),
    ("fig4_xy8_fast", include_str!("../configs/fig4_xy8_fast.conf")),
    ("fig4_xy8_slow", include_str!("../configs/fig4_xy8_slow.conf")),
    (
        "fig4_xy8_slow_square",
        include_str!("../configs/fig4_xy8_slow_square.conf"),
    ),
    ("noise_trace", include_str!("../configs/noise_trace.conf")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Loads a bundled config by name, or a config file by path.
pub fn load_config(name_or_path: &str) -> Result<RunConfig, ConfigError> {
    let path = Path::new(name_or_path);
    if !path.exists() {
        if let Some(text) = bundled(name_or_path) {
            return RunConfig::parse(text);
        }
    }
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: name_or_path.to_string(),
        message: e.to_string(),
    })?;
    RunConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_config_parses_and_validates() {
        for (name, text) in BUNDLED {
            let cfg = RunConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_name_is_a_read_error() {
        assert!(matches!(load_config("no_such_config"), Err(ConfigError::Read { .. })));
    }
}

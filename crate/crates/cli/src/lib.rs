//! Configuration loading and the `eig`, `certify`, `simulate` and `sweep`
//! commands behind the `rdstab` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use config::{AppConfig, ConfigError, Overrides};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Exit code for a failed command: configuration problems map to 2,
/// everything else to 3.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<rdstab_core::Error>() {
            return if e.is_input_error() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERICAL
            };
        }
    }
    EXIT_NUMERICAL
}

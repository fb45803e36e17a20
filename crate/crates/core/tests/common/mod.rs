use proptest::test_runner::{Config, FileFailurePersistence};

/// Proptest settings for integration tests, which have no `lib.rs` beside
/// them to anchor regression files.
pub fn config(cases: u32) -> Config {
    Config {
        cases,
        failure_persistence: Some(Box::new(FileFailurePersistence::Off)),
        ..Config::default()
    }
}

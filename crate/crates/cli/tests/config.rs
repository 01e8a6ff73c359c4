use proptest::prelude::*;
use twotime_cli::config::DiracSection;
use twotime_cli::{parse_config, CliError, Command, RunConfig};

#[test]
fn minimal_hardy_config_fills_defaults() {
    let c = parse_config("theta = 1.0\nn = 500\nseed = 42\n").unwrap();
    assert_eq!(c.n, 500);
    assert_eq!(c.seed, 42);
    assert_eq!(c.sigma, 1.0);
    assert_eq!(c.separation, 40.0);
    assert_eq!(c.h, -1.0);
    assert_eq!(c.dirac, DiracSection::default());
    assert!(c.detectors.is_empty());
}

#[test]
fn narrow_tracks_are_rejected_by_name() {
    let err = parse_config("sigma = 1.0\nseparation = 5.0\n").unwrap_err();
    match err {
        CliError::Validation { field, message } => {
            assert_eq!(field, "separation");
            assert!(message.contains("track separation"), "{message}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn unknown_keys_fail_with_their_line() {
    let err = parse_config("n = 10\n\n[equilibrium]\ncells_a = 8\ncels_b = 4\n").unwrap_err();
    assert!(matches!(err, CliError::Parse { line: 5, .. }), "{err}");
    assert!(err.to_string().contains("cels_b"));
}

#[test]
fn canonical_form_round_trips() {
    let text = r#"
command = "dirac"
h = 0.5
n = 77
seed = 18446744073709551615
slices = ["II(0)", "I(t2)"]

[[detectors]]
track = "b:+z"
time = 1.0

[nogo]
constraints = "= 1/1 : 1 *\n"
bound_row = 0
"#;
    let c = parse_config(text).unwrap();
    assert_eq!(c.command, Some(Command::Dirac));
    assert_eq!(c.seed, u64::MAX);
    let again = parse_config(&c.to_toml().unwrap()).unwrap();
    assert_eq!(again, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn round_trip_preserves_every_field(
        h in -1.5..1.5f64,
        n in 1usize..1_000_000,
        seed in any::<u64>(),
        check in any::<bool>(),
        grid_points in 2usize..50,
        trials in 1usize..1000,
        span in 0.1..5.0f64,
    ) {
        let mut c = RunConfig { h, n, seed, check, grid_points, ..RunConfig::default() };
        c.measure.trials = trials;
        c.dirac.span = span;
        c.validate().unwrap();
        let text = c.to_toml().unwrap();
        prop_assert_eq!(parse_config(&text).unwrap(), c);
    }
}

use chdbc_core::config::{parse_config, PotentialKindName, RegularizationKind, RunConfig, SchemeName, SweepAxis};
use chdbc_core::Error;
use proptest::prelude::*;

fn messages(e: Error) -> Vec<String> {
    match e {
        Error::Validation(v) => v,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn empty_document_gives_the_golden_defaults() {
    let c = parse_config("").unwrap();
    assert_eq!(c, RunConfig::default());
    assert_eq!((c.grid.lx, c.grid.nx, c.grid.ny), (4.0, 64, 33));
    assert_eq!((c.model.l, c.model.sigma), (1.0, 1.0));
    assert_eq!((c.potential.theta, c.potential.theta_c), (0.3, 1.0));
    assert_eq!((c.step.tau, c.init.seed, c.init.mean), (1e-3, 7, 0.2));
}

#[test]
fn forbidden_regime_is_reported() {
    let e = parse_config("[model]\nl = 1.0\nsigma = 0.0\n").unwrap_err();
    let m = messages(e);
    assert!(m.iter().any(|s| s.contains("L>0 with sigma>0") && s.contains("L=0 with sigma>=0")), "{m:?}");
}

#[test]
fn mean_at_pure_phase_is_reported() {
    let m = messages(parse_config("[init]\nmean = 1.0\n").unwrap_err());
    assert!(m.iter().any(|s| s.contains("A4")), "{m:?}");
}

#[test]
fn violations_are_aggregated() {
    let text = "[grid]\nnx = 7\n[step]\ntau = -1.0\n[init]\nmean = 2.0\n";
    let m = messages(parse_config(text).unwrap_err());
    assert!(m.len() >= 3, "{m:?}");
}

#[test]
fn syntax_and_schema_errors_carry_locations() {
    for text in ["[grid]\nnx = \"many\"\n", "[grid]\nbogus = 1\n", "[grid\n"] {
        match parse_config(text) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("line "), "{location}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}

#[test]
fn sweep_values_are_validated() {
    let text = "[sweep]\naxis = \"l\"\nvalues = [0.1, -1.0]\n";
    let m = messages(parse_config(text).unwrap_err());
    assert!(m.iter().any(|s| s.contains("sweep.values[1]")), "{m:?}");
    let ok = parse_config("[sweep]\naxis = \"epsilon\"\nvalues = [0.1, 0.01]\n").unwrap();
    let c = ok.apply_axis(SweepAxis::Epsilon, 0.01).unwrap();
    assert_eq!(c.model.regularization, RegularizationKind::Yosida);
    assert!(c.sweep.is_none());
}

#[test]
fn hash_tracks_physics_only() {
    let base = RunConfig::default();
    let mut seeded = base.clone();
    seeded.init.seed = 99;
    seeded.output.dir = "elsewhere".into();
    assert_eq!(base.params_hash(), seeded.params_hash());
    let mut stepped = base.clone();
    stepped.step.tau = 5e-4;
    assert_ne!(base.params_hash(), stepped.params_hash());
}

fn config_strategy() -> impl Strategy<Value = RunConfig> {
    (
        (0.5f64..8.0, 2usize..40, 3usize..40),
        (prop::bool::ANY, 0.01f64..5.0, 0.01f64..5.0, prop::bool::ANY, 1e-3f64..0.9),
        (0.05f64..2.0, 0.0f64..3.0),
        (1e-5f64..1e-1, prop::bool::ANY, 1u64..200),
        (-0.9f64..0.9, 0.0f64..0.2, any::<u64>()),
    )
        .prop_map(|(g, m, p, s, i)| {
            let mut c = RunConfig::default();
            c.grid.lx = g.0;
            c.grid.nx = 2 * g.1;
            c.grid.ny = g.2;
            c.model.l = if m.0 { m.1 } else { 0.0 };
            c.model.sigma = m.2;
            c.model.regularization = if m.3 {
                RegularizationKind::Yosida
            } else {
                RegularizationKind::Exact
            };
            c.model.epsilon = m.4;
            c.potential.kind = PotentialKindName::Logarithmic;
            c.potential.theta = p.0;
            c.potential.theta_c = p.1;
            c.step.tau = s.0;
            c.step.scheme = if s.1 { SchemeName::ConvexSplit } else { SchemeName::FullyImplicit };
            c.step.jacobian_every = s.2;
            c.run.checkpoint_every = s.2 * 10;
            c.init.mean = i.0;
            c.init.amplitude = i.1;
            c.init.seed = i.2;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_serialize_parse_is_identity(c in config_strategy()) {
        c.validate().unwrap();
        let text = c.to_toml();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), text);
        prop_assert_eq!(back.params_hash(), c.params_hash());
    }
}

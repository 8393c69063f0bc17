use kinetics_web::{cme_json, ensemble_json, simulate_json, DistributionOut, EnsembleOut, TrajectoryOut};

const DECAY: &str = "species A = 100\nreaction d: A -> 0 @ 1";
const BIRTH_DEATH: &str = "species A = 0\nreaction b: 0 -> A @ 5\nreaction d: A -> 0 @ 1";

#[test]
fn ode_decay_endpoint() {
    let out: TrajectoryOut =
        serde_json::from_str(&simulate_json(DECAY, r#"{"method":"ode","t_end":1,"samples":2}"#).unwrap()).unwrap();
    assert_eq!(out.species, ["A"]);
    assert_eq!(out.time, [0.0, 1.0]);
    assert!((out.values[0][1] - 36.787944).abs() < 1e-4);
}

#[test]
fn simulate_is_seeded() {
    let opts = r#"{"method":"ssa","t_end":5,"samples":11,"seed":3}"#;
    assert_eq!(
        simulate_json(BIRTH_DEATH, opts).unwrap(),
        simulate_json(BIRTH_DEATH, opts).unwrap()
    );
}

#[test]
fn ensemble_mean_near_stationary() {
    let json = ensemble_json(
        BIRTH_DEATH,
        r#"{"method":"tau","t_end":20,"samples":3,"runs":2000,"seed":1}"#,
    )
    .unwrap();
    let out: EnsembleOut = serde_json::from_str(&json).unwrap();
    assert_eq!(out.runs, 2000);
    assert!((out.mean[0][2] - 5.0).abs() < 0.2);
    assert!((out.variance[0][2] - 5.0).abs() < 1.0);
}

#[test]
fn cme_stationary_and_transient() {
    let out: DistributionOut = serde_json::from_str(&cme_json(BIRTH_DEATH, r#"{"caps":[30]}"#).unwrap()).unwrap();
    assert_eq!(out.states, 31);
    assert!((out.means[0] - 5.0).abs() < 1e-9);
    let one = "species A = 1\nreaction d: A -> 0 @ 1";
    let out: DistributionOut = serde_json::from_str(&cme_json(one, r#"{"caps":[1],"time":1}"#).unwrap()).unwrap();
    assert!((out.marginals[0][1] - (-1.0f64).exp()).abs() < 1e-7);
}

#[test]
fn errors_are_messages() {
    assert!(simulate_json("species A = 1\nreaction d A -> 0 @ 1", "{}")
        .unwrap_err()
        .contains("line 2"));
    assert!(simulate_json(DECAY, r#"{"method":"warp"}"#)
        .unwrap_err()
        .contains("warp"));
    assert!(simulate_json(DECAY, r#"{"method":"cle"}"#).unwrap_err().contains("tau"));
    assert!(ensemble_json(DECAY, r#"{"runs":0}"#).is_err());
    assert!(cme_json(DECAY, r#"{"caps":[3]}"#).is_err());
    assert!(simulate_json(DECAY, "not json").unwrap_err().starts_with("bad options"));
}

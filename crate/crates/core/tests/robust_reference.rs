use tiercache::{run_robust, zipf, Context, Network, RobustStop, Uncertainty};

#[test]
fn reference_instance_is_nearly_settled_after_thirty_outer_iterations() {
    let ctx = Context::new(Network::reference_three_tier([8, 6, 4], 50).unwrap()).unwrap();
    let set = Uncertainty::relative(zipf(50, 0.55).unwrap(), 0.25).unwrap();
    let out = run_robust(&set, &ctx, &RobustStop::default()).unwrap();
    assert!(out.solver_failure.is_none());
    let at_30 = out.history.iter().find(|r| r.iter == 30).unwrap().y;
    let gap = (out.y - at_30) / out.y;
    assert!((0.0..0.01).contains(&gap), "relative gap {gap:e} after 30 iterations");
    assert!(out.worst_case.value >= out.y - 1e-4);
}

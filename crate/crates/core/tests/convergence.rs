use acoustolab::semigroup::MidpointStepper;
use acoustolab::{DampingField, Domain, StateVector, SystemOperator};

fn run(op: &SystemOperator, z0: &[f64], t: f64, dt: f64) -> Vec<f64> {
    let s = MidpointStepper::new(op, dt).unwrap();
    let mut z = z0.to_vec();
    for _ in 0..(t / dt).round() as usize {
        z = s.step(&z);
    }
    z
}

fn diff_norm(op: &SystemOperator, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    op.norm(&d)
}

#[test]
fn midpoint_rule_is_second_order_in_time() {
    let b = DampingField::BoundaryCollar { width: 0.2, amplitude: 3.0, smoothness_exponent: 2.0 };
    let op = SystemOperator::assemble(Domain::rectangle(1.0, 1.0).unwrap(), [16, 16], b).unwrap();
    let z0 = StateVector::smooth_random(&op, 3).data;
    let t = 0.5;
    let reference = run(&op, &z0, t, 0.025 / 64.0);
    let errs: Vec<f64> =
        [0.025, 0.0125, 0.00625].iter().map(|&dt| diff_norm(&op, &run(&op, &z0, t, dt), &reference)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.2..=4.8).contains(&ratio), "errors {errs:?}");
    }
}

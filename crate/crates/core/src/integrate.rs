//! Fixed-step one-step integration with the classic 4-stage scheme
//! (Butcher weights 1/6, 1/3, 1/3, 1/6).
//!
//! The right-hand sides integrated here are operator-valued and may depend
//! explicitly on time; stages are evaluated at t, t + h/2, and t + h, which
//! keeps fourth order for non-autonomous systems.

use crate::op::LabeledOperator;

/// One classic fourth-order step from (t, y) with step h.
pub fn rk4_step<F>(rhs: &mut F, t: f64, y: &LabeledOperator, h: f64) -> LabeledOperator
where
    F: FnMut(f64, &LabeledOperator) -> LabeledOperator,
{
    let k1 = rhs(t, y);
    let y2 = y.add(&k1.scale_re(h / 2.0)).unwrap();
    let k2 = rhs(t + h / 2.0, &y2);
    let y3 = y.add(&k2.scale_re(h / 2.0)).unwrap();
    let k3 = rhs(t + h / 2.0, &y3);
    let y4 = y.add(&k3.scale_re(h)).unwrap();
    let k4 = rhs(t + h, &y4);
    let incr = k1
        .add(&k2.scale_re(2.0))
        .unwrap()
        .add(&k3.scale_re(2.0))
        .unwrap()
        .add(&k4)
        .unwrap()
        .scale_re(h / 6.0);
    y.add(&incr).unwrap()
}

/// Integrate from t0 over `steps` uniform steps of size h, recording every
/// grid point including the initial one.
pub fn rk4_solve<F>(
    mut rhs: F,
    t0: f64,
    y0: &LabeledOperator,
    h: f64,
    steps: usize,
) -> Vec<(f64, LabeledOperator)>
where
    F: FnMut(f64, &LabeledOperator) -> LabeledOperator,
{
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.clone();
    out.push((t0, y.clone()));
    for k in 0..steps {
        let t = t0 + h * k as f64;
        y = rk4_step(&mut rhs, t, &y, h);
        out.push((t0 + h * (k + 1) as f64, y.clone()));
    }
    out
}

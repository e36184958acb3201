//! The auxiliary-field systems and the direct memory-quadrature integrator
//! are two independent routes to the same dynamics. Refining the grid and
//! the step must shrink the gap between them, for both kernel orders.

use rd_core::kernel::{HistoryFn, KernelOrder, KernelSpec};
use rd_core::model::ModelSpec;
use rd_core::timeint::{simulate, simulate_nonlocal, SimConfig};
use rd_core::Grid1D;

const LADDER: [(usize, f64); 3] = [(16, 8e-3), (32, 4e-3), (64, 2e-3)];

/// Max-over-checkpoints max-norm gap between the two routes' u-fields.
fn route_gap(
    model: &ModelSpec,
    d: f64,
    order: KernelOrder,
    history: impl Fn(f64) -> f64 + Copy + Send + Sync + 'static,
    n: usize,
    dt: f64,
    t_end: f64,
) -> f64 {
    let grid = Grid1D::new(std::f64::consts::PI, n).unwrap();
    let kernel = KernelSpec::new(order, 0.5).unwrap();
    let eta = HistoryFn::stationary(history, kernel.horizon());
    let config = SimConfig {
        dt,
        t_end,
        output_stride: (0.08 / dt).round() as usize,
        // Disable early stopping so both routes checkpoint identical times.
        convergence_tol: 0.0,
        ..Default::default()
    };
    let local = simulate(model, &grid, d, &kernel, &eta, &config).unwrap();
    let direct = simulate_nonlocal(model, &grid, d, &kernel, &eta, &config).unwrap();
    assert_eq!(local.times, direct.times, "checkpoint clocks diverged");
    let mut worst = 0.0f64;
    for (a, b) in local.snapshots.iter().zip(&direct.snapshots) {
        for (ua, ub) in a.u.iter().zip(&b.u) {
            worst = worst.max((ua - ub).abs());
        }
    }
    worst
}

fn assert_ladder_shrinks(gaps: &[f64], finest_bound: f64) {
    for pair in gaps.windows(2) {
        assert!(
            pair[1] < pair[0],
            "refinement failed to shrink the gap: {gaps:?}"
        );
    }
    assert!(
        *gaps.last().unwrap() <= finest_bound,
        "finest gap {} above {finest_bound}",
        gaps.last().unwrap()
    );
}

#[test]
fn weak_kernel_routes_converge_under_refinement() {
    let model = ModelSpec::logistic(1.0, 0.5, 0.4).unwrap();
    let gaps: Vec<f64> = LADDER
        .iter()
        .map(|&(n, dt)| {
            route_gap(&model, 0.5, KernelOrder::Weak, |x| 0.1 * x.sin(), n, dt, 2.0)
        })
        .collect();
    assert_ladder_shrinks(&gaps, 2e-4);
}

#[test]
fn strong_kernel_routes_converge_under_refinement() {
    let model = ModelSpec::nicholson(0.8, 1.0, 0.6).unwrap();
    let gaps: Vec<f64> = LADDER
        .iter()
        .map(|&(n, dt)| {
            route_gap(&model, 0.1, KernelOrder::Strong, |x| 0.1 * x.sin(), n, dt, 2.0)
        })
        .collect();
    assert_ladder_shrinks(&gaps, 1e-4);
}

#[test]
fn empty_history_keeps_both_routes_exactly_at_zero() {
    let model = ModelSpec::logistic(1.0, 0.5, 0.4).unwrap();
    let gap = route_gap(&model, 0.5, KernelOrder::Weak, |_| 0.0, 24, 4e-3, 1.0);
    assert_eq!(gap, 0.0);
}

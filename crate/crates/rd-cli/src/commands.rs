//! The five batch commands. Each reads its inputs from a [`Config`], writes
//! CSV (and where useful SVG) artifacts into the output directory, and
//! prints a short machine-parsable summary to standard output.

use std::path::Path;

use rd_core::bifurcation::{bif_summary, PrincipalMode};
use rd_core::spectral::principal_eigenpair;
use rd_core::steady::{
    continue_branch, continue_branch_amplitude, linearized_spectrum, seed_from_mode,
    uniqueness_probe, BranchOptions, BranchPoint,
};
use rd_core::timeint::{simulate, simulate_nonlocal, SimConfig, Trajectory, Verdict};
use rd_core::Grid1D;

use crate::config::Config;
use crate::emit::{self, num, Csv};
use crate::inputs;
use crate::CliError;

fn verdict_token(v: Verdict) -> &'static str {
    match v {
        Verdict::ConvergedToZero => "converged-to-zero",
        Verdict::ConvergedToPositive => "converged-to-positive",
        Verdict::NotConverged => "not-converged",
    }
}

/// Evenly spaced inclusive grid; a single point collapses to `from`.
fn linspace(from: f64, to: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![from];
    }
    let step = (to - from) / (points - 1) as f64;
    (0..points).map(|i| from + step * i as f64).collect()
}

/// Onset table over a grid of delay scales.
pub fn cmd_bif_table(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let model = inputs::model_from(cfg)?;
    let grid = inputs::grid_from(cfg)?;
    let taus = cfg.require_f64_list("bif.taus")?;
    cfg.finish()?;

    let pair = principal_eigenpair(&grid)?;
    let mode = PrincipalMode::from_eigenpair(&grid, &pair);
    let mut csv = Csv::new(
        "tau (time), d_star (diffusivity), m_ratio (dimensionless), growth_exponent (1/time), \
         d_prime0 (diffusivity per amplitude^2), sign_test (dimensionless), \
         threshold (diffusivity), u_bound (density), v_bound (density)",
    );
    for &tau in &taus {
        let s = bif_summary(&model, tau, &mode)?;
        csv.row(&[
            num(tau),
            num(s.d_star),
            num(s.m_ratio),
            num(s.growth_exponent),
            num(s.d_prime0),
            num(s.sign_test),
            num(s.threshold.unwrap_or(f64::NAN)),
            num(s.u_bound),
            num(s.v_bound),
        ]);
    }
    let path = out.join("bif_table.csv");
    emit::write_file(&path, &csv.into_string())?;
    crate::outln!("rows={} wrote={}", taus.len(), path.display());
    Ok(())
}

fn branch_csv(points: &[BranchPoint]) -> String {
    let mut csv = Csv::new(
        "d (diffusivity), amplitude (max density), leading_re (1/time), \
         leading_im (1/time), min_sv (dimensionless)",
    );
    for p in points {
        csv.row(&[
            num(p.d),
            num(p.amplitude),
            num(p.leading_re),
            num(p.leading_im),
            num(p.min_sv),
        ]);
    }
    csv.into_string()
}

/// Steady-state branch continuation, natural in `d` or amplitude-indexed.
pub fn cmd_branch(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let model = inputs::model_from(cfg)?;
    let kernel = inputs::kernel_from(cfg)?;
    let grid = inputs::grid_from(cfg)?;
    let kind = cfg.require_str("branch.kind")?.to_string();
    let points_requested = cfg.require_usize("branch.points")?;
    let (from, to) = match kind.as_str() {
        "diffusion" => (
            cfg.require_f64("branch.d_from")?,
            cfg.require_f64("branch.d_to")?,
        ),
        "amplitude" => (
            cfg.require_f64("branch.amp_from")?,
            cfg.require_f64("branch.amp_to")?,
        ),
        other => {
            return Err(CliError::Config(format!(
                "line {}: unknown branch kind `{other}` (expected diffusion or amplitude)",
                cfg.line_of("branch.kind")
            )))
        }
    };
    cfg.finish()?;
    if points_requested == 0 {
        return Err(CliError::Config("`branch.points` must be at least 1".into()));
    }

    let tau = kernel.tau();
    let pair = principal_eigenpair(&grid)?;
    let mode = PrincipalMode::from_eigenpair(&grid, &pair);
    let summary = bif_summary(&model, tau, &mode)?;
    let values = linspace(from, to, points_requested);
    let points = match kind.as_str() {
        "diffusion" => {
            let opts = BranchOptions {
                onset_hint: Some(summary.d_star),
                ..BranchOptions::default()
            };
            let start = seed_from_mode(&model, tau, values[0], kernel.order(), &pair, &summary)?;
            continue_branch(&model, &grid, tau, &values, &start, &opts)?
        }
        _ => continue_branch_amplitude(
            &model,
            &grid,
            tau,
            kernel.order(),
            &values,
            summary.d_star,
            &pair,
            &BranchOptions::default(),
        )?,
    };

    let csv_path = out.join("branch.csv");
    emit::write_file(&csv_path, &branch_csv(&points))?;
    let curve: Vec<(f64, f64)> = points.iter().map(|p| (p.d, p.amplitude)).collect();
    let svg = emit::document(&[emit::line_panel(
        &format!("steady-state branch: {}", model.name()),
        "diffusivity d",
        "max density",
        &curve,
    )]);
    let svg_path = out.join("branch.svg");
    emit::write_file(&svg_path, &svg)?;
    crate::outln!(
        "points={} d_star={} wrote={} wrote={}",
        points.len(),
        num(summary.d_star),
        csv_path.display(),
        svg_path.display()
    );
    Ok(())
}

fn trajectory_csv(run: &Trajectory, grid: &Grid1D) -> String {
    let strong = run.snapshots.first().is_some_and(|s| s.w.is_some());
    let header = if strong {
        "t (time), x (position), u (density), v (feedback), w (stage)"
    } else {
        "t (time), x (position), u (density), v (feedback)"
    };
    let mut csv = Csv::new(header);
    let nodes = grid.nodes();
    for (t, snap) in run.times.iter().zip(&run.snapshots) {
        for (j, x) in nodes.iter().enumerate() {
            let mut cells = vec![num(*t), num(*x), num(snap.u[j]), num(snap.v[j])];
            if let Some(w) = &snap.w {
                cells.push(num(w[j]));
            }
            csv.row(&cells);
        }
    }
    csv.into_string()
}

/// Integrate the local system, classify, and render the space-time field.
pub fn cmd_simulate(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let model = inputs::model_from(cfg)?;
    let kernel = inputs::kernel_from(cfg)?;
    let grid = inputs::grid_from(cfg)?;
    let history = inputs::history_from(cfg, &kernel, grid.length())?;
    let sim = inputs::sim_config_from(cfg)?;
    let d = inputs::diffusion_from(cfg)?;
    cfg.finish()?;

    let run = simulate(&model, &grid, d, &kernel, &history, &sim)?;
    crate::outln!("verdict={}", verdict_token(run.verdict));

    let csv_path = out.join("simulate.csv");
    emit::write_file(&csv_path, &trajectory_csv(&run, &grid))?;

    let xs = grid.nodes();
    let rows: Vec<Vec<f64>> = run.snapshots.iter().map(|s| s.u.clone()).collect();
    let heat = emit::heat_panel(
        &format!("u(x, t): {} at d = {}", model.name(), d),
        "position x",
        "time t",
        &xs,
        &run.times,
        &rows,
    );
    let profile: Vec<(f64, f64)> = xs
        .iter()
        .zip(&run.final_state.u)
        .map(|(x, u)| (*x, *u))
        .collect();
    let final_t = run.times.last().copied().unwrap_or(0.0);
    let line = emit::line_panel(
        &format!("final profile u(x, {final_t:.1})"),
        "position x",
        "density u",
        &profile,
    );
    let svg_path = out.join("simulate.svg");
    emit::write_file(&svg_path, &emit::document(&[heat, line]))?;
    crate::outln!("wrote={} wrote={}", csv_path.display(), svg_path.display());
    Ok(())
}

/// Run the auxiliary-field system and the direct memory integrator on the
/// same setup across a refinement ladder and compare their u-fields.
pub fn cmd_verify_equivalence(cfg: &Config, out: &Path) -> Result<(), CliError> {
    let model = inputs::model_from(cfg)?;
    let kernel = inputs::kernel_from(cfg)?;
    let length = cfg.require_f64("grid.length")?;
    let history = inputs::history_from(cfg, &kernel, length)?;
    let base = inputs::sim_config_from(cfg)?;
    let d = inputs::diffusion_from(cfg)?;
    let levels = cfg.require_levels("verify.levels")?;
    let t_end = cfg.get_f64("verify.t_end")?.unwrap_or(4.0);
    let gap_bound = cfg.get_f64("verify.gap_bound")?.unwrap_or(1e-3);
    let sample_every = cfg.get_f64("verify.sample_every")?.unwrap_or(0.08);
    cfg.finish()?;

    let mut csv = Csv::new("level (index), n (nodes), dt (time), gap (max density difference)");
    let mut gaps = Vec::with_capacity(levels.len());
    for (level, &(n, dt)) in levels.iter().enumerate() {
        let grid = Grid1D::new(length, n).map_err(CliError::from)?;
        let stride = ((sample_every / dt).round() as usize).max(1);
        let sim = SimConfig {
            dt,
            t_end,
            output_stride: stride,
            // Both routes must checkpoint the same clock, so early stopping
            // is disabled for the comparison regardless of the sim settings.
            convergence_tol: 0.0,
            ..base
        };
        let local = simulate(&model, &grid, d, &kernel, &history, &sim)?;
        let direct = simulate_nonlocal(&model, &grid, d, &kernel, &history, &sim)?;
        let mut gap = 0.0f64;
        for (a, b) in local.snapshots.iter().zip(&direct.snapshots) {
            for (ua, ub) in a.u.iter().zip(&b.u) {
                gap = gap.max((ua - ub).abs());
            }
        }
        crate::outln!("level={level} n={n} dt={} gap={}", num(dt), num(gap));
        csv.row(&[level.to_string(), n.to_string(), num(dt), num(gap)]);
        gaps.push(gap);
    }
    let path = out.join("verify.csv");
    emit::write_file(&path, &csv.into_string())?;
    crate::outln!("wrote={}", path.display());

    let finest = *gaps.last().unwrap();
    if finest > gap_bound {
        return Err(CliError::Bound(format!(
            "finest-level gap {} exceeds the configured bound {}",
            num(finest),
            num(gap_bound)
        )));
    }
    crate::outln!("finest_gap={} bound={}", num(finest), num(gap_bound));
    Ok(())
}

/// Randomized multi-start steady-state search over a diffusivity list.
pub fn cmd_uniqueness_probe(
    cfg: &Config,
    out: &Path,
    seed_flag: Option<u64>,
) -> Result<(), CliError> {
    let model = inputs::model_from(cfg)?;
    let kernel = inputs::kernel_from(cfg)?;
    let grid = inputs::grid_from(cfg)?;
    let d_values = cfg.require_f64_list("probe.d_values")?;
    let starts = cfg.require_usize("probe.starts")?;
    let amp_lo = cfg.require_f64("probe.amp_lo")?;
    let amp_hi = cfg.require_f64("probe.amp_hi")?;
    // The config seed is consumed either way: a config must stay valid
    // independent of which command-line flags accompany it.
    let config_seed = cfg.get_u64("run.seed")?;
    let seed = seed_flag.or(config_seed).unwrap_or(0);
    cfg.finish()?;

    let tau = kernel.tau();
    let pair = principal_eigenpair(&grid)?;
    let mut csv = Csv::new(
        "d (diffusivity), attempts (count), zero_hits (count), failures (count), \
         distinct_positive (count), max_u (density), min_sv (dimensionless)",
    );
    for &d in &d_values {
        let outcome = uniqueness_probe(
            &model,
            &grid,
            d,
            tau,
            kernel.order(),
            &pair,
            starts,
            (amp_lo, amp_hi),
            seed,
            None,
        )?;
        let (max_u, min_sv) = match outcome.positive.first() {
            Some(state) => {
                let spectrum = linearized_spectrum(&model, &grid, d, tau, state)?;
                let peak = state.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (peak, spectrum.min_sv)
            }
            None => (f64::NAN, f64::NAN),
        };
        crate::outln!(
            "d={} distinct={} zero={} failed={}",
            num(d),
            outcome.positive.len(),
            outcome.zero_hits,
            outcome.failures
        );
        csv.row(&[
            num(d),
            outcome.attempts.to_string(),
            outcome.zero_hits.to_string(),
            outcome.failures.to_string(),
            outcome.positive.len().to_string(),
            num(max_u),
            num(min_sv),
        ]);
    }
    let path = out.join("probe.csv");
    emit::write_file(&path, &csv.into_string())?;
    crate::outln!("wrote={}", path.display());
    Ok(())
}

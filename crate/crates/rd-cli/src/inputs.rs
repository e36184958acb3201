//! Translate parsed configuration keys into library inputs.

use rd_core::kernel::{HistoryFn, KernelOrder, KernelSpec};
use rd_core::model::ModelSpec;
use rd_core::timeint::SimConfig;
use rd_core::{Grid1D, RdError};

use crate::config::Config;
use crate::CliError;

/// Any library rejection while constructing inputs is a configuration
/// problem, not a numerical one.
fn reject(key_hint: &str, err: RdError) -> CliError {
    CliError::Config(format!("invalid `{key_hint}`: {err}"))
}

pub fn model_from(cfg: &Config) -> Result<ModelSpec, CliError> {
    let name = cfg.require_str("model.name")?;
    let model = match name {
        "logistic" => ModelSpec::logistic(
            cfg.require_f64("model.growth")?,
            cfg.require_f64("model.instant")?,
            cfg.require_f64("model.delayed")?,
        ),
        "logistic_cubic" => ModelSpec::logistic_cubic(
            cfg.require_f64("model.growth")?,
            cfg.require_f64("model.instant")?,
            cfg.require_f64("model.delayed")?,
            cfg.require_f64("model.cubic")?,
        ),
        "food_limited" => ModelSpec::food_limited(
            cfg.require_f64("model.growth")?,
            cfg.require_f64("model.instant")?,
            cfg.require_f64("model.delayed")?,
            cfg.require_f64("model.saturation")?,
        ),
        "nicholson" => ModelSpec::nicholson(
            cfg.require_f64("model.death")?,
            cfg.require_f64("model.birth")?,
            cfg.require_f64("model.ricker")?,
        ),
        "nicholson_variant" => ModelSpec::nicholson_variant(
            cfg.require_f64("model.death")?,
            cfg.require_f64("model.birth")?,
            cfg.require_f64("model.ricker")?,
        ),
        "monod" => ModelSpec::monod(
            cfg.require_f64("model.death")?,
            cfg.require_f64("model.birth")?,
            cfg.require_f64("model.half_sat")?,
        ),
        other => {
            return Err(CliError::Config(format!(
                "line {}: unknown model `{other}` (expected logistic, logistic_cubic, \
                 food_limited, nicholson, nicholson_variant, or monod)",
                cfg.line_of("model.name")
            )))
        }
    };
    model.map_err(|e| reject("model", e))
}

pub fn kernel_from(cfg: &Config) -> Result<KernelSpec, CliError> {
    let order = match cfg.require_str("kernel.order")? {
        "weak" => KernelOrder::Weak,
        "strong" => KernelOrder::Strong,
        other => {
            return Err(CliError::Config(format!(
                "line {}: unknown kernel order `{other}` (expected weak or strong)",
                cfg.line_of("kernel.order")
            )))
        }
    };
    KernelSpec::new(order, cfg.require_f64("kernel.tau")?).map_err(|e| reject("kernel.tau", e))
}

pub fn grid_from(cfg: &Config) -> Result<Grid1D, CliError> {
    let length = cfg.require_f64("grid.length")?;
    let n = cfg.require_usize("grid.n")?;
    Grid1D::new(length, n).map_err(|e| reject("grid", e))
}

/// Initial history of the run: `sine` is `amplitude * sin(pi x / L)`,
/// `constant` is flat. The horizon defaults to the kernel's own.
pub fn history_from(
    cfg: &Config,
    kernel: &KernelSpec,
    length: f64,
) -> Result<HistoryFn, CliError> {
    let amplitude = cfg.require_f64("history.amplitude")?;
    let horizon = cfg.get_f64("history.horizon")?.unwrap_or(kernel.horizon());
    if horizon <= 0.0 {
        return Err(CliError::Config(format!(
            "line {}: `history.horizon` must be positive",
            cfg.line_of("history.horizon")
        )));
    }
    match cfg.require_str("history.kind")? {
        "sine" => {
            let freq = std::f64::consts::PI / length;
            Ok(HistoryFn::stationary(
                move |x: f64| amplitude * (freq * x).sin(),
                horizon,
            ))
        }
        "constant" => Ok(HistoryFn::stationary(move |_| amplitude, horizon)),
        other => Err(CliError::Config(format!(
            "line {}: unknown history kind `{other}` (expected sine or constant)",
            cfg.line_of("history.kind")
        ))),
    }
}

pub fn sim_config_from(cfg: &Config) -> Result<SimConfig, CliError> {
    let defaults = SimConfig::default();
    let sim = SimConfig {
        dt: cfg.get_f64("sim.dt")?.unwrap_or(defaults.dt),
        t_end: cfg.get_f64("sim.t_end")?.unwrap_or(defaults.t_end),
        output_stride: cfg
            .get_usize("sim.output_stride")?
            .unwrap_or(defaults.output_stride),
        convergence_tol: cfg
            .get_f64("sim.convergence_tol")?
            .unwrap_or(defaults.convergence_tol),
        convergence_window: cfg
            .get_usize("sim.convergence_window")?
            .unwrap_or(defaults.convergence_window),
        attractor_tol: cfg
            .get_f64("sim.attractor_tol")?
            .unwrap_or(defaults.attractor_tol),
        zero_tol: cfg.get_f64("sim.zero_tol")?.unwrap_or(defaults.zero_tol),
        blowup_cap: cfg.get_f64("sim.blowup_cap")?.unwrap_or(defaults.blowup_cap),
        history_cap: cfg
            .get_usize("sim.history_cap")?
            .unwrap_or(defaults.history_cap),
    };
    sim.validate().map_err(|e| reject("sim", e))?;
    Ok(sim)
}

pub fn diffusion_from(cfg: &Config) -> Result<f64, CliError> {
    let d = cfg.require_f64("run.d")?;
    if d <= 0.0 {
        return Err(CliError::Config(format!(
            "line {}: `run.d` must be positive",
            cfg.line_of("run.d")
        )));
    }
    Ok(d)
}

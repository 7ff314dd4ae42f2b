//! Assembles a full switch model from a [`SwitchConfig`].
//!
//! The build resolves the architecture into concrete pieces: which
//! purification schedule runs (if any), which count law the scheduler
//! sees, and which service tables the capacity LP and the simulator
//! share. Both consumers are built from the same intermediate objects so
//! analysis and simulation cannot diverge.

use crate::bell::{swap_fidelity, swap_fidelity_inverse, BellError};
use crate::capacity::{service_function, Architecture, CapacityError, CapacityModel};
use crate::config::{ConfigError, SwitchConfig};
use crate::link::{purified_link_law, raw_link_law, LinkError, LinkParams, SwapMatrix};
use crate::purify::{plan_rounds, yield_model, PurificationSpec, YieldError, YieldModel};
use crate::sim::{SimError, SimModel};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bell(#[from] BellError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Yield(#[from] YieldError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Sim(#[from] SimError),
    /// The purification schedule cannot reach the fidelity threshold, so
    /// the capacity region degenerates to the origin.
    #[error(
        "{architecture} cannot reach fidelity {f_target} (best {fidelity_reached} after {rounds} \
         rounds); the capacity region is only the zero rate"
    )]
    ZeroRegion {
        architecture: &'static str,
        f_target: f64,
        fidelity_reached: f64,
        rounds: usize,
    },
}

/// A fully resolved switch: config plus every derived object the CLI
/// needs for capacity analysis and simulation.
#[derive(Debug, Clone)]
pub struct SwitchModel {
    pub config: SwitchConfig,
    pub link_params: LinkParams,
    pub swap: SwapMatrix,
    /// Per-link purification schedule; `None` for the noiseless baseline.
    pub spec: Option<PurificationSpec>,
    /// Yield law of that schedule; `None` for the noiseless baseline.
    pub yield_model: Option<YieldModel>,
    pub capacity: CapacityModel,
    pub sim: SimModel,
}

impl SwitchModel {
    pub fn build(config: &SwitchConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let k = config.users;
        let mut link_params = LinkParams::new(
            k,
            config.alpha_max,
            vec![config.p; k],
            config.f_link,
        )?;
        if let (Some(theta), Some(d)) = (config.attenuation, config.length) {
            link_params = link_params.with_attenuation(theta, vec![d; k])?;
        }
        let swap = SwapMatrix::from_constant(k, config.q)?;
        let proto = config.protocol_id()?;

        let zero_region = |arch: &'static str, e: YieldError| match e {
            YieldError::TargetUnreachable {
                f_target,
                fidelity_reached,
                rounds,
            } => ModelError::ZeroRegion {
                architecture: arch,
                f_target,
                fidelity_reached,
                rounds,
            },
            other => ModelError::Yield(other),
        };

        let (spec, ym, capacity, sim) = match config.architecture {
            Architecture::NoiseLess => {
                let raw = raw_link_law(&link_params);
                let capacity = CapacityModel::noise_less(raw, swap.clone())?;
                let sim = SimModel::noise_less(link_params.clone(), swap.clone())?;
                (None, None, capacity, sim)
            }
            Architecture::PurifySwap => {
                // Purify links up to the fidelity whose swap meets the
                // end-to-end threshold.
                let input = config.noise.state(config.f_link)?;
                let target = swap_fidelity_inverse(config.f_threshold)?;
                let spec = plan_rounds(proto, input, target, config.max_rounds)
                    .map_err(|e| zero_region("PS", e))?;
                let ym = yield_model(&spec, config.x_max)?;
                let purified = purified_link_law(&raw_link_law(&link_params), &ym)?;
                let capacity = CapacityModel::purify_swap(purified, swap.clone())?;
                let sim = SimModel::purify_swap(link_params.clone(), swap.clone(), ym.clone())?;
                (Some(spec), Some(ym), capacity, sim)
            }
            Architecture::SwapPurify => {
                // Swapped pairs start at the degraded fidelity and must be
                // purified up to the threshold itself.
                let f_swapped = swap_fidelity(config.f_link)?;
                let input = config.noise.state(f_swapped)?;
                let spec = plan_rounds(proto, input, config.f_threshold, config.max_rounds)
                    .map_err(|e| zero_region("SP", e))?;
                let ym = yield_model(&spec, config.x_max)?;
                let table = service_function(&ym, config.q, config.alpha_max)?;
                let tables = vec![table; config.pair_count()];
                let raw = raw_link_law(&link_params);
                let capacity = CapacityModel::swap_purify(raw, swap.clone(), tables.clone())?;
                let sim = SimModel::swap_purify(
                    link_params.clone(),
                    swap.clone(),
                    ym.clone(),
                    tables,
                )?;
                (Some(spec), Some(ym), capacity, sim)
            }
        };

        Ok(Self {
            config: config.clone(),
            link_params,
            swap,
            spec,
            yield_model: ym,
            capacity,
            sim,
        })
    }

    /// Arrival rates expanded to one entry per pair.
    pub fn rates(&self) -> Vec<f64> {
        self.config.expanded_rates()
    }
}

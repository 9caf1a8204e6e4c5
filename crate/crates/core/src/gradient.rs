//! Score-distillation gradients: SDS, DDS and the grounded multi-subtask
//! aggregate with null-text penalty and banded full-prompt guidance.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::backend::{
    cfg_combine, perturb, predict_noise, predict_noise_batch, Condition, NoiseQuery, ScoreBackend,
};
use crate::error::{GasError, Result};
use crate::latent::{LatentGrid, Mask};
use crate::plan::{EditPlan, GasConfig};
use crate::schedule::{snr_band, DiffusionSchedule};

/// Per-step telemetry of a grounded gradient evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub timestep: usize,
    pub alpha_used: f64,
    pub gamma: Vec<f64>,
    pub grad_norm_inside: f64,
    pub grad_norm_outside: f64,
}

fn guided<B: ScoreBackend + ?Sized>(
    backend: &B,
    z_t: &LatentGrid,
    t: usize,
    cond: &Condition,
    omega: f64,
) -> Result<LatentGrid> {
    let preds = predict_noise_batch(
        backend,
        t,
        &[
            NoiseQuery { z_t, cond },
            NoiseQuery {
                z_t,
                cond: &Condition::null(),
            },
        ],
    )?;
    cfg_combine(&preds[0], &preds[1], omega)
}

/// `w'(t) (eps_hat^omega(z_t, t, cond) - eps)` for the identity generator.
#[allow(clippy::too_many_arguments)]
pub fn sds_gradient<B: ScoreBackend + ?Sized>(
    backend: &B,
    z: &LatentGrid,
    t: usize,
    eps: &LatentGrid,
    cond: &Condition,
    sched: &DiffusionSchedule,
    config: &GasConfig,
) -> Result<LatentGrid> {
    let z_t = perturb(z, t, eps, sched)?;
    let pred = guided(backend, &z_t, t, cond, config.omega)?;
    Ok(pred.sub(eps).scale(config.loss_weight))
}

/// `w'(t) (eps_hat^omega(z_t, t, cond) - eps_hat^omega(zref_t, t, cond_ref))`
/// with both branches perturbed by the same `(t, eps)`.
#[allow(clippy::too_many_arguments)]
pub fn dds_gradient<B: ScoreBackend + ?Sized>(
    backend: &B,
    z: &LatentGrid,
    z_ref: &LatentGrid,
    t: usize,
    eps: &LatentGrid,
    cond: &Condition,
    cond_ref: &Condition,
    sched: &DiffusionSchedule,
    config: &GasConfig,
) -> Result<LatentGrid> {
    z.ensure_same_shape(z_ref, "dds_gradient")?;
    let z_t = perturb(z, t, eps, sched)?;
    let zr_t = perturb(z_ref, t, eps, sched)?;
    let tgt = guided(backend, &z_t, t, cond, config.omega)?;
    let src = guided(backend, &zr_t, t, cond_ref, config.omega)?;
    Ok(tgt.sub(&src).scale(config.loss_weight))
}

/// Mean absolute divergence between the guided target prediction and the
/// null prediction over the masked elements (all channels).
pub fn masked_mean_abs_divergence(
    eps_target_cfg: &LatentGrid,
    eps_null: &LatentGrid,
    mask: &Mask,
) -> Result<f64> {
    eps_target_cfg.ensure_same_shape(eps_null, "null_text_penalty")?;
    let shape = eps_target_cfg.shape();
    if mask.dims() != (shape.height, shape.width) {
        return Err(GasError::invalid(format!(
            "mask {:?} does not match latent {shape}",
            mask.dims()
        )));
    }
    if mask.area() == 0 {
        return Err(GasError::invalid(
            "null-text penalty needs a non-empty mask",
        ));
    }
    let diff = eps_target_cfg.sub(eps_null).masked(mask);
    let total: f64 = diff.array().iter().map(|v| v.abs()).sum();
    Ok(total / (mask.area() * shape.channels) as f64)
}

/// `min(eta * mean(|eps_target_cfg - eps_null| over mask), 1)`.
pub fn null_text_penalty(
    eps_target_cfg: &LatentGrid,
    eps_null: &LatentGrid,
    mask: &Mask,
    eta: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(GasError::invalid(format!("eta must be > 0, got {eta}")));
    }
    let d = masked_mean_abs_divergence(eps_target_cfg, eps_null, mask)?;
    Ok((eta * d).min(1.0))
}

/// Spatial weights that damp the larger masks where masks overlap.
///
/// Masks are totally ordered by `(area, index)`; at each cell the smallest
/// covering mask keeps weight 1 and every larger covering mask gets
/// `overlap_factor`. Cells outside a mask keep weight 1 (masking is applied
/// separately).
pub fn overlap_weights(masks: &[Mask], overlap_factor: f64) -> Result<Vec<Array2<f64>>> {
    let Some(first) = masks.first() else {
        return Ok(Vec::new());
    };
    let dims = first.dims();
    if let Some(k) = masks.iter().position(|m| m.dims() != dims) {
        return Err(GasError::invalid(format!("mask {k} has a different shape")));
    }
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by_key(|&k| (masks[k].area(), k));

    let mut weights = vec![Array2::from_elem(dims, 1.0); masks.len()];
    for y in 0..dims.0 {
        for x in 0..dims.1 {
            let mut covering = order.iter().filter(|&&k| masks[k].contains(y, x));
            if covering.next().is_some() {
                for &k in covering {
                    weights[k][[y, x]] = overlap_factor;
                }
            }
        }
    }
    Ok(weights)
}

/// Full-prompt guidance weight for the band containing `t`.
pub fn alpha_for_timestep(t: usize, sched: &DiffusionSchedule, config: &GasConfig) -> Result<f64> {
    Ok(config.alpha_values[snr_band(t, sched, config.num_bands())?])
}

/// Grounded score gradient for one shared `(t, eps)` draw.
///
/// Issues one batch of `2n + 4` predictions: every target phrase, the target
/// prompt and null on `z_t`, then every source phrase, the source prompt and
/// null on the perturbed reference. The two null predictions are reused for
/// every guided combination and every penalty coefficient.
#[allow(clippy::too_many_arguments)]
pub fn gas_gradient<B: ScoreBackend + ?Sized>(
    backend: &B,
    z: &LatentGrid,
    z_ref: &LatentGrid,
    plan: &EditPlan,
    t: usize,
    eps: &LatentGrid,
    sched: &DiffusionSchedule,
    config: &GasConfig,
) -> Result<(LatentGrid, GradientReport)> {
    z.ensure_same_shape(z_ref, "gas_gradient reference")?;
    z.ensure_same_shape(eps, "gas_gradient noise")?;
    let shape = z.shape();
    if plan.mask_dims() != (shape.height, shape.width) {
        return Err(GasError::invalid(format!(
            "plan masks are {:?} but latent is {shape}",
            plan.mask_dims()
        )));
    }
    if plan.union_mask().area() == 0 {
        return Err(GasError::DegeneratePlan("union mask is empty".into()));
    }

    let alpha = alpha_for_timestep(t, sched, config)?;
    let z_t = perturb(z, t, eps, sched)?;
    let zr_t = perturb(z_ref, t, eps, sched)?;

    let subtasks = plan.subtasks();
    let n = subtasks.len();
    let null = Condition::null();
    let target_conds: Vec<Condition> = subtasks
        .iter()
        .map(|s| Condition::phrase(s.target_phrase.as_str()))
        .chain([Condition::full_prompt(plan.target_prompt())])
        .collect();
    let source_conds: Vec<Condition> = subtasks
        .iter()
        .map(|s| Condition::phrase(s.source_phrase.as_str()))
        .chain([Condition::full_prompt(plan.source_prompt())])
        .collect();
    let queries: Vec<NoiseQuery<'_>> = target_conds
        .iter()
        .chain([&null])
        .map(|cond| NoiseQuery { z_t: &z_t, cond })
        .chain(
            source_conds
                .iter()
                .chain([&null])
                .map(|cond| NoiseQuery { z_t: &zr_t, cond }),
        )
        .collect();
    let preds = predict_noise_batch(backend, t, &queries)?;
    let (tgt_preds, src_preds) = preds.split_at(n + 2);
    let null_t = &tgt_preds[n + 1];
    let null_r = &src_preds[n + 1];

    let masks: Vec<Mask> = subtasks.iter().map(|s| s.mask.clone()).collect();
    let weights = overlap_weights(&masks, config.overlap_factor)?;

    let mut grad = LatentGrid::zeros(shape);
    let mut gamma = Vec::with_capacity(n);
    for (k, sub) in subtasks.iter().enumerate() {
        let tgt = cfg_combine(&tgt_preds[k], null_t, config.omega)?;
        let src = cfg_combine(&src_preds[k], null_r, config.omega)?;
        let g = if config.null_text_penalty && sub.penalty_eligible {
            null_text_penalty(&tgt, null_t, &sub.mask, config.eta)?
        } else {
            1.0
        };
        gamma.push(g);
        let field = &weights[k] * &sub.mask.to_weights();
        let delta = tgt.sub(&src).mul_spatial(&field);
        grad.add_scaled(config.loss_weight * g, &delta);
    }

    let full_tgt = cfg_combine(&tgt_preds[n], null_t, config.omega)?;
    let full_src = cfg_combine(&src_preds[n], null_r, config.omega)?;
    let full = full_tgt.sub(&full_src).masked(plan.union_mask());
    grad.add_scaled(config.loss_weight * alpha, &full);

    let report = GradientReport {
        timestep: t,
        alpha_used: alpha,
        gamma,
        grad_norm_inside: grad.masked_norm(plan.union_mask(), true),
        grad_norm_outside: grad.masked_norm(plan.union_mask(), false),
    };
    Ok((grad, report))
}

/// Per-cell channel mean of `|eps_hat^omega(z_t, t, cond) - eps_hat(z_t, t, null)|`.
pub fn null_text_divergence_map<B: ScoreBackend + ?Sized>(
    backend: &B,
    z: &LatentGrid,
    t: usize,
    eps: &LatentGrid,
    cond: &Condition,
    sched: &DiffusionSchedule,
    config: &GasConfig,
) -> Result<Array2<f64>> {
    let z_t = perturb(z, t, eps, sched)?;
    let cond_pred = predict_noise(backend, &z_t, t, cond)?;
    let null_pred = predict_noise(backend, &z_t, t, &Condition::null())?;
    let guided = cfg_combine(&cond_pred, &null_pred, config.omega)?;
    let diff = guided.sub(&null_pred).array().mapv(f64::abs);
    Ok(diff
        .mean_axis(ndarray::Axis(0))
        .expect("latent has at least one channel"))
}

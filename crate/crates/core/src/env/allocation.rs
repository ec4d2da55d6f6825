//! Per-UAV power and bandwidth splitting.

use super::action::{AllocationScheme, HybridAction};
use super::channel::distance;
use super::config::ScenarioConfig;
use super::pairing::PairingAssignment;
use super::EnvError;

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    /// `M x N`, watts.
    pub power_w: Vec<Vec<f64>>,
    /// `M x N`, hertz.
    pub bandwidth_hz: Vec<Vec<f64>>,
}

fn normalized(weights: &[f64], served: &[bool]) -> Vec<f64> {
    let total: f64 = weights.iter().zip(served).filter(|(_, &s)| s).map(|(w, _)| *w).sum();
    let count = served.iter().filter(|&&s| s).count() as f64;
    weights
        .iter()
        .zip(served)
        .map(|(&w, &s)| match (s, total > 0.0 && total.is_finite()) {
            (false, _) => 0.0,
            (true, true) => w / total,
            (true, false) => 1.0 / count,
        })
        .collect()
}

/// Fractions of the budget per GU (zero for unserved), summing to one.
pub fn scheme_shares(
    scheme: AllocationScheme,
    served: &[bool],
    random_proportions: &[f64],
    distances: &[f64],
    alpha: f64,
    distance_weight: f64,
) -> Vec<f64> {
    let random = || {
        let raw: Vec<f64> = random_proportions.iter().map(|p| p.max(0.0)).collect();
        normalized(&raw, served)
    };
    let by_distance = || {
        let w: Vec<f64> = distances.iter().map(|d| d.powf(-alpha)).collect();
        normalized(&w, served)
    };
    match scheme {
        AllocationScheme::Random => random(),
        AllocationScheme::Even => normalized(&vec![1.0; served.len()], served),
        AllocationScheme::Distance => by_distance(),
        AllocationScheme::Mixed => {
            let mix: Vec<f64> = by_distance()
                .iter()
                .zip(random())
                .map(|(d, r)| distance_weight * d + (1.0 - distance_weight) * r)
                .collect();
            normalized(&mix, served)
        }
    }
}

/// Scales shares to `total`, lifting any served entry below `floor` to the
/// floor and re-spreading what is left over the others in proportion to
/// their shares.
pub fn apply_floor(shares: &[f64], served: &[bool], total: f64, floor: f64) -> Result<Vec<f64>, EnvError> {
    let count = served.iter().filter(|&&s| s).count();
    if count as f64 * floor > total {
        return Err(EnvError::Config(format!(
            "{count} served GUs need {} but only {total} is available",
            count as f64 * floor
        )));
    }
    let mut pinned = vec![false; shares.len()];
    loop {
        let free: Vec<usize> = (0..shares.len()).filter(|&n| served[n] && !pinned[n]).collect();
        let pinned_count = count - free.len();
        let remaining = total - floor * pinned_count as f64;
        let weight: f64 = free.iter().map(|&n| shares[n]).sum();
        let value = |n: usize| {
            if weight > 0.0 {
                remaining * shares[n] / weight
            } else {
                remaining / free.len() as f64
            }
        };
        let below: Vec<usize> = free.iter().copied().filter(|&n| value(n) < floor).collect();
        if below.is_empty() || free.is_empty() {
            return Ok((0..shares.len())
                .map(|n| match (served[n], pinned[n]) {
                    (false, _) => 0.0,
                    (true, true) => floor,
                    (true, false) => value(n),
                })
                .collect());
        }
        if below.len() == free.len() {
            // every remaining GU sits at the floor; spread the slack evenly
            let each = remaining / free.len() as f64;
            return Ok((0..shares.len())
                .map(|n| match (served[n], pinned[n]) {
                    (false, _) => 0.0,
                    (true, true) => floor,
                    (true, false) => each,
                })
                .collect());
        }
        for n in below {
            pinned[n] = true;
        }
    }
}

/// Power and bandwidth for one UAV's served GUs.
pub fn allocate_for_uav(
    action: &HybridAction,
    served: &[bool],
    uav_pos: [f64; 3],
    gu_positions: &[[f64; 3]],
    cfg: &ScenarioConfig,
) -> Result<(Vec<f64>, Vec<f64>), EnvError> {
    let distances: Vec<f64> = gu_positions.iter().map(|&g| distance(uav_pos, g)).collect();
    let p_shares = scheme_shares(
        action.power_scheme,
        served,
        &action.random_proportions_p,
        &distances,
        cfg.alpha,
        cfg.c1,
    );
    let b_shares = scheme_shares(
        action.bandwidth_scheme,
        served,
        &action.random_proportions_b,
        &distances,
        cfg.alpha,
        cfg.c3,
    );
    let power = apply_floor(&p_shares, served, cfg.p_total_w(), cfg.p_min_w)?;
    let bandwidth = apply_floor(&b_shares, served, cfg.b_total_hz, cfg.b_min_hz)?;
    Ok((power, bandwidth))
}

pub fn allocate_resources(
    actions: &[HybridAction],
    pairing: &PairingAssignment,
    uav_positions: &[[f64; 3]],
    gu_positions: &[[f64; 3]],
    cfg: &ScenarioConfig,
) -> Result<AllocationResult, EnvError> {
    let mut power_w = Vec::with_capacity(actions.len());
    let mut bandwidth_hz = Vec::with_capacity(actions.len());
    for (m, action) in actions.iter().enumerate() {
        if action.random_proportions_p.len() != gu_positions.len()
            || action.random_proportions_b.len() != gu_positions.len()
        {
            return Err(EnvError::Usage("proportion vector length differs from GU count".into()));
        }
        let (p, b) = allocate_for_uav(action, pairing.row(m), uav_positions[m], gu_positions, cfg)?;
        power_w.push(p);
        bandwidth_hz.push(b);
    }
    Ok(AllocationResult { power_w, bandwidth_hz })
}

//! Per-slot physical allocation: residual licensed capacity, modified
//! demand, the opportunistic pool and max-min fair waterfilling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::market::{MarketParams, OperatorId, Osa};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TierAssignment {
    pub tier1: BTreeSet<OperatorId>,
    pub tier2: BTreeSet<OperatorId>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotAllocation {
    pub served_licensed: BTreeMap<OperatorId, f64>,
    pub served_opportunistic: BTreeMap<OperatorId, f64>,
}

/// Capacity of a Tier-1 operator's licensed channel left for opportunistic
/// use once it has served `demand`.
pub fn residual_capacity(demand: f64, params: &MarketParams) -> f64 {
    let cap = params.channel_capacity();
    match params.osa {
        Osa::Overlay => params.alpha_l * (cap - demand).max(0.0),
        Osa::Interweave => {
            if demand == 0.0 {
                params.alpha_l * cap
            } else {
                0.0
            }
        }
    }
}

/// Demand that has to be met opportunistically.
pub fn modified_demand(demand: f64, is_tier1: bool, params: &MarketParams) -> f64 {
    if is_tier1 {
        f64::from(params.phi) * (demand - params.channel_capacity()).max(0.0)
    } else {
        demand
    }
}

/// Opportunistic pool: the unlicensed channels (plus licensed channels nobody
/// is interested in) at efficiency α_U, plus the residual of every Tier-1
/// licensed channel.
pub fn opportunistic_capacity<'a, I>(tier1_demands: I, n_interested_licensed: usize, params: &MarketParams) -> f64
where
    I: IntoIterator<Item = &'a f64>,
{
    let effective_p = (n_interested_licensed as u64).min(u64::from(params.p)) as f64;
    let unlicensed = params.alpha_u * (f64::from(params.m) - effective_p) * params.channel_capacity();
    unlicensed + tier1_demands.into_iter().map(|&d| residual_capacity(d, params)).sum::<f64>()
}

/// Max-min fair allocation of `capacity` over `demands`.
pub fn waterfill(capacity: f64, demands: &BTreeMap<OperatorId, f64>) -> BTreeMap<OperatorId, f64> {
    let ids: Vec<OperatorId> = demands.keys().copied().collect();
    let values: Vec<f64> = demands.values().copied().collect();
    let mut out = vec![0.0; values.len()];
    let mut order = Vec::with_capacity(values.len());
    waterfill_into(capacity, &values, &mut order, &mut out);
    ids.into_iter().zip(out).collect()
}

/// Slice form of [`waterfill`] used on the sampling hot path. `demands` must be
/// listed in ascending operator id so the (demand, id) tie-break is preserved;
/// `order` is scratch space.
pub fn waterfill_into(capacity: f64, demands: &[f64], order: &mut Vec<usize>, out: &mut [f64]) {
    order.clear();
    order.extend(0..demands.len());
    // Stable insertion sort: operator counts are small and the order is
    // deterministic for equal demands.
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && demands[order[j - 1]] > demands[order[j]] {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut remaining = capacity;
    let mut left = order.len();
    for &k in order.iter() {
        let share = remaining / left as f64;
        let give = demands[k].min(share);
        out[k] = give;
        remaining -= give;
        left -= 1;
    }
}

/// Winners of the licensed-channel auction: the `p` highest bids, with ties
/// going to the lower operator id. `interested` lists every interested
/// operator, licensed or not; losers and non-bidders form Tier 2.
pub fn assign_tiers(bids: &BTreeMap<OperatorId, f64>, p: u32, interested: &BTreeSet<OperatorId>) -> TierAssignment {
    let mut ranked: Vec<(OperatorId, f64)> = bids.iter().map(|(&k, &v)| (k, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let tier1: BTreeSet<OperatorId> = ranked.into_iter().take(p as usize).map(|(k, _)| k).collect();
    let tier2 = interested
        .iter()
        .chain(bids.keys())
        .filter(|k| !tier1.contains(k))
        .copied()
        .collect();
    TierAssignment { tier1, tier2 }
}

/// Hot-path form of [`assign_tiers`]: marks the `p` highest of `bids`
/// (indexed in ascending operator id) as winners.
pub(crate) fn mark_winners(bids: &[f64], p: usize, order: &mut Vec<usize>, winner: &mut [bool]) {
    winner.iter_mut().for_each(|w| *w = false);
    if p >= bids.len() {
        winner.iter_mut().for_each(|w| *w = true);
        return;
    }
    order.clear();
    order.extend(0..bids.len());
    order.sort_unstable_by(|&a, &b| bids[b].total_cmp(&bids[a]).then(a.cmp(&b)));
    for &k in order.iter().take(p) {
        winner[k] = true;
    }
}

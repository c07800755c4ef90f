use crate::maxent::ModelSet;
use crate::model::SupportIndex;

/// Floor for pattern expectations inside the heuristic. Patterns of a few
/// dozen edges legitimately have expectations far below the per-edge clamp.
pub const PATTERN_P_FLOOR: f64 = f64::MIN_POSITIVE;

pub fn floor_pattern_p(p: f64) -> f64 {
    p.clamp(PATTERN_P_FLOOR, 1.0)
}

/// `s · ln(q / p)` for support count `s = c·q`, with `0 · ln 0 = 0`.
pub fn gain_term(support: u32, size: usize, p: f64) -> f64 {
    if support == 0 {
        return 0.0;
    }
    let q = support as f64 / size as f64;
    support as f64 * (q / floor_pattern_p(p)).ln()
}

/// Heuristic gain `h(X) = Σ_i c_i q_i(X) ln(q_i(X) / p_i(X)) - k/2 · ln|𝒢|`.
pub fn heuristic_h(index: &SupportIndex, models: &ModelSet, x: &[u32]) -> f64 {
    let counts = index.support(x);
    heuristic_from_counts(index, models, x, &counts)
}

/// Per-group heuristic `h_i(X) = c_i q_i(X) ln(q_i(X) / p_i(X)) - k/2 · ln|𝒢|`.
pub fn heuristic_h_partial(index: &SupportIndex, models: &ModelSet, group: usize, x: &[u32]) -> f64 {
    let counts = index.support(x);
    let c = index.group_sizes()[group];
    let term = if counts[group] == 0 {
        0.0
    } else {
        gain_term(counts[group], c, models.models[group].query(x))
    };
    term - models.penalty()
}

/// `h(X)` from precomputed per-group support counts; skips the model
/// query in groups where `X` never occurs.
pub(crate) fn heuristic_from_counts(index: &SupportIndex, models: &ModelSet, x: &[u32], counts: &[u32]) -> f64 {
    let mut total = 0.0;
    for (i, &s) in counts.iter().enumerate() {
        if s > 0 {
            total += gain_term(s, index.group_sizes()[i], models.models[i].query(x));
        }
    }
    total - models.penalty()
}

/// `h(X)` together with whether some group with `h_i(X) > 0` could still
/// take `X` under its factor capacity. Without such a group `X` can never
/// be accepted.
pub(crate) fn placeable_heuristic(index: &SupportIndex, models: &ModelSet, x: &[u32], counts: &[u32]) -> (f64, bool) {
    let penalty = models.penalty();
    let mut total = 0.0;
    let mut open = false;
    for (i, &s) in counts.iter().enumerate() {
        if s > 0 {
            let model = &models.models[i];
            let term = gain_term(s, index.group_sizes()[i], model.query(x));
            total += term;
            open = open || (term > penalty && model.has_capacity_for(x));
        }
    }
    (total - penalty, open)
}

//! Seeded instance generators.

use lexiplan_core::mdp::{validate, MdpInstance};
use lexiplan_core::{QuantileObjective, RewardSpec};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::format::InstanceDocument;

/// Probabilities produced by the generators are multiples of `1 / GRID`.
pub const GRID: u32 = 64;

/// Largest grid world (cells plus end states) the grid generator will build.
pub const GRID_STATE_BUDGET: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("InfeasibleParams: {0}")]
    InfeasibleParams(String),
}

fn infeasible(msg: impl Into<String>) -> GenError {
    GenError::InfeasibleParams(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomParams {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub num_end: usize,
    /// Fraction of states in the support of each non-end row.
    pub density: f64,
    /// Number of random {0,1} reward levels to attach.
    pub reward_levels: usize,
    pub taus: Option<Vec<f64>>,
    pub seed: u64,
}

// Splits GRID units over the weights by largest remainder, giving each slot
// at least `floor` units.
fn quantize(weights: &[f64], floor: u32) -> Vec<u32> {
    let total: f64 = weights.iter().sum();
    let spare = GRID - floor * weights.len() as u32;
    let shares: Vec<f64> = weights.iter().map(|w| w / total * spare as f64).collect();
    let mut units: Vec<u32> = shares.iter().map(|x| floor + x.floor() as u32).collect();
    let mut left = GRID - units.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        units[i] += 1;
        left -= 1;
    }
    units
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() + 1e-3).collect()
}

/// Random instance with absorbing end states in a random preference order.
#[allow(clippy::needless_range_loop)]
pub fn generate_random(params: &RandomParams) -> Result<InstanceDocument, GenError> {
    let RandomParams { num_states: ns, num_actions: na, horizon, num_end, density, .. } = *params;
    if ns == 0 || na == 0 || horizon == 0 {
        return Err(infeasible("states, actions and horizon must be positive"));
    }
    if num_end >= ns {
        return Err(infeasible(format!("{num_end} end states need more than {ns} states")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(infeasible(format!("density {density} outside (0, 1]")));
    }
    let support = ((density * ns as f64).ceil() as usize).clamp(1, ns);
    if support > GRID as usize {
        return Err(infeasible(format!("row support {support} exceeds {GRID}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut end_states = index::sample(&mut rng, ns, num_end).into_vec();
    end_states.shuffle(&mut rng);
    let mut is_end = vec![false; ns];
    for &e in &end_states {
        is_end[e] = true;
    }

    let mut m = MdpInstance::zeroed(ns, na, horizon);
    for s in 0..ns {
        for a in 0..na {
            if is_end[s] {
                m.set(s, a, s, 1.0);
                continue;
            }
            let targets = index::sample(&mut rng, ns, support).into_vec();
            let units = quantize(&random_weights(&mut rng, support), 1);
            for (next, u) in targets.into_iter().zip(units) {
                m.set(s, a, next, u as f64 / GRID as f64);
            }
        }
    }
    let starts: Vec<usize> = (0..ns).filter(|s| !is_end[*s]).collect();
    let units = quantize(&random_weights(&mut rng, starts.len()), 0);
    for (s, u) in starts.into_iter().zip(units) {
        m.initial_distribution[s] = u as f64 / GRID as f64;
    }
    m.end_states = end_states;

    let instance = validate(m).map_err(|r| infeasible(format!("generator produced {r}")))?;
    let rewards = if params.reward_levels > 0 {
        let levels = (0..params.reward_levels)
            .map(|_| {
                let mut level = RewardSpec::zero_level(&instance);
                for (i, p) in instance.transitions.iter().enumerate() {
                    let state = i / (na * ns);
                    if *p > 0.0 && !instance.is_end(state) && rng.random_bool(0.5) {
                        level[i] = 1.0;
                    }
                }
                level
            })
            .collect();
        Some(RewardSpec::new(&instance, levels).map_err(|e| infeasible(e.to_string()))?)
    } else {
        None
    };
    let objective = params
        .taus
        .clone()
        .map(QuantileObjective::new)
        .transpose()
        .map_err(|e| infeasible(e.to_string()))?;

    Ok(InstanceDocument {
        name: format!("random-s{}-seed{}", ns, params.seed),
        instance,
        end_state_names: None,
        rewards,
        objective,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazardSpec {
    /// Probability of drifting to one of the two perpendicular directions.
    pub slip: f64,
    /// Chance that a cell other than start and goal is a hazard.
    pub hazard_density: f64,
    /// Stopping within this Manhattan distance of the goal counts as near.
    pub near_radius: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridParams {
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub hazards: HazardSpec,
    pub taus: Option<Vec<f64>>,
    pub seed: u64,
}

pub const GRID_OUTCOMES: [&str; 4] = ["crash", "goal-far", "goal-near", "goal-exact"];

const MOVES: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

/// Grid walk from the top-left cell toward the bottom-right goal.
///
/// Actions 0..4 move up, right, down and left; the intended move happens with
/// probability `1 - slip`, each perpendicular one with `slip / 2`. Bumping a
/// wall leaves the walker in place, entering a hazard crashes and entering the
/// goal ends at `goal-exact`. Action 4 stops: `goal-near` within `near_radius`
/// of the goal, `goal-far` otherwise. Outcomes rank
/// crash < goal-far < goal-near < goal-exact.
#[allow(clippy::needless_range_loop)]
pub fn generate_hazard_grid(params: &GridParams) -> Result<InstanceDocument, GenError> {
    let GridParams { width, height, horizon, .. } = *params;
    let spec = &params.hazards;
    if width == 0 || height == 0 || width * height < 2 {
        return Err(infeasible("grid needs at least two cells"));
    }
    if horizon == 0 {
        return Err(infeasible("horizon must be positive"));
    }
    let cells = width * height;
    if cells + GRID_OUTCOMES.len() > GRID_STATE_BUDGET {
        return Err(infeasible(format!(
            "{} states exceed the budget of {GRID_STATE_BUDGET}",
            cells + GRID_OUTCOMES.len()
        )));
    }
    if !(0.0..1.0).contains(&spec.slip) {
        return Err(infeasible(format!("slip {} outside [0, 1)", spec.slip)));
    }
    if !(0.0..1.0).contains(&spec.hazard_density) {
        return Err(infeasible(format!("hazard density {} outside [0, 1)", spec.hazard_density)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let start = 0;
    let goal = cells - 1;
    let hazard: Vec<bool> = (0..cells)
        .map(|c| c != start && c != goal && rng.random_bool(spec.hazard_density))
        .collect();
    let [crash, far, near, exact] = [cells, cells + 1, cells + 2, cells + 3];
    let ns = cells + GRID_OUTCOMES.len();
    let na = MOVES.len() + 1;
    let mut m = MdpInstance::zeroed(ns, na, horizon);

    let dest = |c: usize, (dx, dy): (isize, isize)| -> usize {
        let x = (c % width) as isize + dx;
        let y = (c / width) as isize + dy;
        if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
            return c;
        }
        let n = y as usize * width + x as usize;
        if hazard[n] {
            crash
        } else if n == goal {
            exact
        } else {
            n
        }
    };

    for c in 0..cells {
        if hazard[c] || c == goal {
            for a in 0..na {
                m.set(c, a, c, 1.0);
            }
            continue;
        }
        for (a, &(dx, dy)) in MOVES.iter().enumerate() {
            let branches = [
                ((dx, dy), 1.0 - spec.slip),
                ((dy, dx), spec.slip / 2.0),
                ((-dy, -dx), spec.slip / 2.0),
            ];
            for (dir, p) in branches {
                if p > 0.0 {
                    let n = dest(c, dir);
                    let old = m.prob(c, a, n);
                    m.set(c, a, n, old + p);
                }
            }
        }
        let (x, y) = (c % width, c / width);
        let distance = (width - 1 - x) + (height - 1 - y);
        let stop = if distance <= spec.near_radius { near } else { far };
        m.set(c, MOVES.len(), stop, 1.0);
    }
    for e in [crash, far, near, exact] {
        for a in 0..na {
            m.set(e, a, e, 1.0);
        }
    }
    m.end_states = vec![crash, far, near, exact];
    m.initial_distribution[start] = 1.0;

    let instance = validate(m).map_err(|r| infeasible(format!("generator produced {r}")))?;
    let objective = params
        .taus
        .clone()
        .map(QuantileObjective::new)
        .transpose()
        .map_err(|e| infeasible(e.to_string()))?;
    Ok(InstanceDocument {
        name: format!("grid-{width}x{height}-seed{}", params.seed),
        instance,
        end_state_names: Some(GRID_OUTCOMES.iter().map(|s| s.to_string()).collect()),
        rewards: None,
        objective,
    })
}

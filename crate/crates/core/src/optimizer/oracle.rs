use super::{energy_cost, FlowSchedule, HourFlows, OptimizationWindow, OptimizerError, SolverConfig};
use crate::battery::AgingContext;
use crate::parallel;

/// Tractability guard of [`brute_force_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLimits {
    pub max_horizon: usize,
    /// Largest allowed E_max / grid step.
    pub max_levels: f64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_horizon: 4,
            max_levels: 23.0,
        }
    }
}

/// 0, step, 2·step, … below `cap`, plus `cap` itself.
fn levels(cap: f64, step: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..)
        .map(|k| k as f64 * step)
        .take_while(|e| *e < cap - 1e-12)
        .collect();
    v.push(cap.max(0.0));
    v
}

/// Candidate (g2v, v2g, v2h) triples for one hour. Charging and discharging
/// in the same hour is never cheaper than the net flow alone, so they are
/// not combined.
fn candidates(window: &OptimizationWindow, t: usize, step: f64) -> Vec<(f64, f64, f64)> {
    let e_max = window.battery.spec.max_hourly_energy_kwh;
    let load = window.predicted_load[t];
    let mut out: Vec<_> = levels(e_max, step).into_iter().map(|g| (g, 0.0, 0.0)).collect();
    let v2h_levels = if window.v2h_enabled && load > 0.0 {
        levels(load.min(e_max), step)
    } else {
        vec![0.0]
    };
    for h in v2h_levels {
        let v2g_levels = if window.v2g_enabled {
            levels(e_max - h, step)
        } else {
            vec![0.0]
        };
        for g in v2g_levels {
            if g > 0.0 || h > 0.0 {
                out.push((0.0, g, h));
            }
        }
    }
    out
}

#[derive(Clone, Copy)]
struct Node {
    soc: f64,
    q_tot: f64,
    q_ch: f64,
    cost: f64,
}

struct Search<'a> {
    window: &'a OptimizationWindow,
    ctx: AgingContext<'a>,
    cands: Vec<Vec<(f64, f64, f64)>>,
    penalty: f64,
    cost_per_percent: f64,
}

impl Search<'_> {
    fn step(&self, node: &Node, t: usize, c: (f64, f64, f64)) -> Option<Node> {
        let w = self.window;
        let (g2v, v2g, v2h) = c;
        let load = w.predicted_load[t];
        let eb = w.battery.spec.capacity_kwh;
        let mut soc = node.soc + (g2v - v2g - v2h) / eb;
        if !(-1e-9..=1.0 + 1e-9).contains(&soc) {
            return None;
        }
        soc = soc.clamp(0.0, 1.0);
        if let Some(g) = w.grid_limit[t] {
            if g2v + load - v2h > g + 1e-9 {
                return None;
            }
        }
        let aging = self
            .ctx
            .hour(
                w.degradation.age_hours + t as f64,
                node.q_tot,
                node.q_ch,
                node.soc,
                soc,
                g2v,
                v2g + v2h,
                1.0,
            )
            .ok()?;
        let flows = HourFlows {
            e_v2g: v2g,
            e_v2h: v2h,
            e_g2v: g2v,
            e_g2h: load - v2h,
            slack: 0.0,
            soc,
        };
        let shortfall = (w.soc_goal[t] - soc).max(0.0);
        Some(Node {
            soc,
            q_tot: node.q_tot + aging.dq_tot,
            q_ch: node.q_ch + aging.dq_ch,
            cost: node.cost
                + energy_cost(&flows, w.prices[t], w.price_ratio)
                + self.cost_per_percent * aging.increments.total()
                + self.penalty * shortfall,
        })
    }

    fn dfs(&self, node: Node, t: usize, path: &mut Vec<(f64, f64, f64)>, best: &mut Best) {
        if t == self.cands.len() {
            if node.cost < best.cost {
                best.cost = node.cost;
                best.path.clone_from(path);
            }
            return;
        }
        for &c in &self.cands[t] {
            if let Some(next) = self.step(&node, t, c) {
                path.push(c);
                self.dfs(next, t + 1, path, best);
                path.pop();
            }
        }
    }
}

struct Best {
    cost: f64,
    path: Vec<(f64, f64, f64)>,
}

/// Exhaustive search over flows on a `grid_step_kwh` lattice, scored with the
/// exact (unsmoothed, post-increment) objective. Returns the best discrete
/// schedule and its objective in €.
pub fn brute_force_oracle(
    window: &OptimizationWindow,
    grid_step_kwh: f64,
    cfg: &SolverConfig,
) -> Result<(FlowSchedule, f64), OptimizerError> {
    brute_force_oracle_with_limits(window, grid_step_kwh, cfg, OracleLimits::default())
}

pub fn brute_force_oracle_with_limits(
    window: &OptimizationWindow,
    grid_step_kwh: f64,
    cfg: &SolverConfig,
    limits: OracleLimits,
) -> Result<(FlowSchedule, f64), OptimizerError> {
    window.validate()?;
    let e_max = window.battery.spec.max_hourly_energy_kwh;
    if !(grid_step_kwh > 0.0) {
        return Err(OptimizerError::OracleGuard(format!(
            "grid step {grid_step_kwh} must be positive"
        )));
    }
    if window.horizon() > limits.max_horizon {
        return Err(OptimizerError::OracleGuard(format!(
            "horizon {} exceeds {}",
            window.horizon(),
            limits.max_horizon
        )));
    }
    if e_max / grid_step_kwh > limits.max_levels + 1e-9 {
        return Err(OptimizerError::OracleGuard(format!(
            "E_max / step = {} exceeds {}",
            e_max / grid_step_kwh,
            limits.max_levels
        )));
    }
    let search = Search {
        window,
        ctx: window.battery.exact_context(),
        cands: (0..window.horizon())
            .map(|t| candidates(window, t, grid_step_kwh))
            .collect(),
        penalty: 100.0 * cfg.slack_penalty_weight,
        cost_per_percent: window.battery.cost_per_percent(),
    };
    let root = Node {
        soc: window.soc_initial,
        q_tot: window.degradation.q_tot,
        q_ch: window.degradation.q_ch,
        cost: 0.0,
    };
    let branches = parallel::map(&search.cands[0], |&c| {
        let mut best = Best {
            cost: f64::INFINITY,
            path: Vec::new(),
        };
        if let Some(next) = search.step(&root, 0, c) {
            let mut path = vec![c];
            search.dfs(next, 1, &mut path, &mut best);
        }
        best
    });
    let best = branches
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .filter(|b| b.cost.is_finite())
        .ok_or_else(|| OptimizerError::Numerical("no feasible discrete schedule".into()))?;
    Ok((FlowSchedule::from_flows(window, &best.path), best.cost))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sets() {
        assert_eq!(levels(2.0, 0.5), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(levels(1.2, 0.5), vec![0.0, 0.5, 1.0, 1.2]);
        assert_eq!(levels(0.0, 0.5), vec![0.0]);
    }
}

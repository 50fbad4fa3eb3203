use std::cell::Cell;

use nalgebra::{DMatrix, DVector, SVector};
use num_dual::{hessian, Dual2SVec64, DualNum, HyperDual64};

use super::{energy_cost, FlowSchedule, OptimizationWindow, OptimizerError, SolverConfig};
use crate::battery::{AgingContext, SocGate, ThroughputDenominator};

/// Indices of one hour's decision variables. G2H and SoC are not variables:
/// G2H follows from the load balance, SoC from the recursion. All variables
/// are kWh, including the goal slack.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HourVars {
    pub g2v: usize,
    pub v2g: Option<usize>,
    pub v2h: Option<usize>,
    pub slack: Option<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub hours: Vec<HourVars>,
    pub n: usize,
}

impl Layout {
    pub fn new(window: &OptimizationWindow) -> Self {
        let mut n = 0;
        let mut next = || {
            n += 1;
            n - 1
        };
        let hours = (0..window.horizon())
            .map(|t| HourVars {
                g2v: next(),
                v2g: window.v2g_enabled.then(&mut next),
                v2h: (window.v2h_enabled && window.predicted_load[t] > 0.0).then(&mut next),
                slack: (window.soc_goal[t] > 0.0).then(&mut next),
            })
            .collect();
        Self { hours, n }
    }

    fn get<D: Copy>(x: &[D], idx: Option<usize>, zero: D) -> D {
        idx.map_or(zero, |i| x[i])
    }

    /// (g2v, v2g, v2h) for hour `t`.
    pub fn flows<D: DualNum<Primitive = f64> + Copy>(&self, x: &[D], t: usize) -> (D, D, D) {
        let h = &self.hours[t];
        let zero = D::from(0.0);
        (x[h.g2v], Self::get(x, h.v2g, zero), Self::get(x, h.v2h, zero))
    }

    /// Coefficients of the net battery energy of hour `t` (g2v − v2g − v2h).
    fn net_row(&self, t: usize, row: &mut [f64], sign: f64) {
        let h = &self.hours[t];
        row[h.g2v] += sign;
        for i in [h.v2g, h.v2h].into_iter().flatten() {
            row[i] -= sign;
        }
    }

    /// Linear inequality constraints `A x ≤ b` in kWh units.
    pub fn constraints(&self, window: &OptimizationWindow) -> (DMatrix<f64>, DVector<f64>) {
        let eb = window.battery.spec.capacity_kwh;
        let e_max = window.battery.spec.max_hourly_energy_kwh;
        let soc0 = window.soc_initial;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs = Vec::new();
        let mut push = |row: Vec<f64>, b: f64| {
            rows.push(row);
            rhs.push(b);
        };
        let unit = |i: usize, v: f64| {
            let mut r = vec![0.0; self.n];
            r[i] = v;
            r
        };
        let mut cumulative = vec![0.0; self.n];
        for (t, h) in self.hours.iter().enumerate() {
            let load = window.predicted_load[t];
            push(unit(h.g2v, -1.0), 0.0);
            push(unit(h.g2v, 1.0), e_max);
            for i in [h.v2g, h.v2h, h.slack].into_iter().flatten() {
                push(unit(i, -1.0), 0.0);
            }
            if let Some(i) = h.v2h {
                // g2h = load − v2h ≥ 0
                push(unit(i, 1.0), load);
            }
            if h.v2g.is_some() || h.v2h.is_some() {
                let mut r = vec![0.0; self.n];
                for i in [h.v2g, h.v2h].into_iter().flatten() {
                    r[i] = 1.0;
                }
                push(r, e_max);
            }
            self.net_row(t, &mut cumulative, 1.0);
            push(cumulative.clone(), (1.0 - soc0) * eb);
            push(cumulative.iter().map(|v| -v).collect(), soc0 * eb);
            if let Some(s) = h.slack {
                let mut r: Vec<f64> = cumulative.iter().map(|v| -v).collect();
                r[s] = -1.0;
                push(r, (soc0 - window.soc_goal[t]) * eb);
            }
            if let Some(g) = window.grid_limit[t] {
                // g2v + load − v2h ≤ G
                let mut r = unit(h.g2v, 1.0);
                if let Some(i) = h.v2h {
                    r[i] = -1.0;
                }
                push(r, g - load);
            }
        }
        let m = rows.len();
        let a = DMatrix::from_fn(m, self.n, |i, j| rows[i][j]);
        (a, DVector::from_vec(rhs))
    }

    /// Starting point spreading the goal energy evenly over the window.
    pub fn cold_start(&self, window: &OptimizationWindow) -> DVector<f64> {
        let eb = window.battery.spec.capacity_kwh;
        let e_max = window.battery.spec.max_hourly_energy_kwh;
        let goal = window.soc_goal.iter().cloned().fold(0.0, f64::max);
        let need = ((goal - window.soc_initial) * eb).max(0.0);
        let per_hour = (need / window.horizon() as f64).min(0.8 * e_max);
        let mut x = DVector::zeros(self.n);
        for (t, h) in self.hours.iter().enumerate() {
            x[h.g2v] = per_hour + 0.05 * e_max;
            if let Some(i) = h.v2g {
                x[i] = 0.05 * e_max;
            }
            if let Some(i) = h.v2h {
                x[i] = 0.5 * window.predicted_load[t].min(e_max);
            }
            if let Some(i) = h.slack {
                x[i] = 0.01 * eb;
            }
        }
        x
    }

    /// Packs a previous schedule (shifted to this window) as a starting point;
    /// hours it does not cover fall back to the cold start.
    pub fn pack(&self, window: &OptimizationWindow, warm: &FlowSchedule) -> DVector<f64> {
        let eb = window.battery.spec.capacity_kwh;
        let mut x = self.cold_start(window);
        for (t, (h, f)) in self.hours.iter().zip(&warm.hours).enumerate() {
            x[h.g2v] = f.e_g2v;
            if let Some(i) = h.v2g {
                x[i] = f.e_v2g;
            }
            if let Some(i) = h.v2h {
                x[i] = f.e_v2h.min(window.predicted_load[t]);
            }
            if let Some(i) = h.slack {
                x[i] = f.slack * eb;
            }
        }
        x
    }

    /// Turns a solver iterate into a schedule that satisfies every constraint
    /// exactly: flows are clipped to their boxes and the SoC bounds are
    /// restored by trimming the flows of the offending hour.
    pub fn unpack(&self, window: &OptimizationWindow, x: &[f64]) -> FlowSchedule {
        let spec = &window.battery.spec;
        let (eb, e_max) = (spec.capacity_kwh, spec.max_hourly_energy_kwh);
        let mut soc = window.soc_initial;
        let mut flows = Vec::with_capacity(self.hours.len());
        for t in 0..self.hours.len() {
            let load = window.predicted_load[t];
            let (g2v, v2g, v2h) = self.flows(x, t);
            let mut g2v = g2v.clamp(0.0, e_max);
            let mut v2h = v2h.clamp(0.0, load.min(e_max));
            let mut v2g = v2g.clamp(0.0, e_max - v2h);
            if let Some(g) = window.grid_limit[t] {
                g2v = g2v.min((g - load + v2h).max(0.0));
            }
            let over = soc + (g2v - v2g - v2h) / eb - 1.0;
            if over > 0.0 {
                g2v = (g2v - over * eb).max(0.0);
            }
            let mut under = -(soc + (g2v - v2g - v2h) / eb);
            if under > 0.0 {
                let cut = v2g.min(under * eb);
                v2g -= cut;
                under -= cut / eb;
                if under > 0.0 {
                    v2h = (v2h - under * eb).max(0.0);
                }
            }
            soc = (soc + (g2v - v2g - v2h) / eb).clamp(0.0, 1.0);
            flows.push((g2v, v2g, v2h));
        }
        FlowSchedule::from_flows(window, &flows)
    }
}

/// Aging context for a solver configuration.
pub(crate) fn aging_context<'a>(window: &'a OptimizationWindow, cfg: &SolverConfig) -> AgingContext<'a> {
    let b = &window.battery;
    AgingContext {
        params: &b.params,
        consts: &b.consts,
        temperature_k: b.temperature_k,
        gate: SocGate::from_eps(cfg.gate_smoothing_eps),
        throughput: if cfg.degradation_denominator_freeze {
            ThroughputDenominator::Frozen {
                floor_ah: cfg.throughput_floor_ah,
            }
        } else {
            ThroughputDenominator::PostIncrement
        },
        curve_smoothing: cfg.curve_smoothing_width,
    }
}

/// € per SoC fraction of goal shortfall.
fn penalty_per_fraction(cfg: &SolverConfig) -> f64 {
    100.0 * cfg.slack_penalty_weight
}

pub(crate) struct Breakdown {
    pub energy: f64,
    pub battery: f64,
    pub penalty: f64,
    /// percent
    pub degradation: f64,
}

/// Objective of an explicit schedule.
pub(crate) struct CostModel<'a> {
    window: &'a OptimizationWindow,
    ctx: AgingContext<'a>,
    penalty: f64,
}

impl<'a> CostModel<'a> {
    pub fn new(window: &'a OptimizationWindow, cfg: &SolverConfig) -> Self {
        Self {
            window,
            ctx: aging_context(window, cfg),
            penalty: penalty_per_fraction(cfg),
        }
    }

    pub fn evaluate(&self, flows: &FlowSchedule) -> Result<Breakdown, OptimizerError> {
        let w = self.window;
        let state = &w.degradation;
        let (mut q_tot, mut q_ch) = (state.q_tot, state.q_ch);
        let frozen = matches!(self.ctx.throughput, ThroughputDenominator::Frozen { .. });
        let mut soc_prev = w.soc_initial;
        let mut out = Breakdown {
            energy: 0.0,
            battery: 0.0,
            penalty: 0.0,
            degradation: 0.0,
        };
        for (t, h) in flows.hours.iter().enumerate() {
            out.energy += energy_cost(h, w.prices[t], w.price_ratio);
            out.penalty += self.penalty * h.slack;
            let aging = self.ctx.hour(
                state.age_hours + t as f64,
                q_tot,
                q_ch,
                soc_prev,
                h.soc,
                h.battery_in(),
                h.battery_out(),
                1.0,
            )?;
            out.degradation += aging.increments.total();
            if !frozen {
                q_tot += aging.dq_tot;
                q_ch += aging.dq_ch;
            }
            soc_prev = h.soc;
        }
        out.battery = out.degradation * w.battery.cost_per_percent();
        Ok(out)
    }
}

/// The window NLP in the packed variables.
pub(crate) struct WindowProblem<'a> {
    window: &'a OptimizationWindow,
    layout: &'a Layout,
    ctx: AgingContext<'a>,
    frozen: bool,
    linear: DVector<f64>,
    constant: f64,
    cost_per_percent: f64,
}

impl<'a> WindowProblem<'a> {
    pub fn new(window: &'a OptimizationWindow, cfg: &SolverConfig, layout: &'a Layout) -> Self {
        let eb = window.battery.spec.capacity_kwh;
        let mut linear = DVector::zeros(layout.n);
        let mut constant = 0.0;
        for (t, h) in layout.hours.iter().enumerate() {
            let p = window.prices[t];
            linear[h.g2v] = p;
            if let Some(i) = h.v2g {
                linear[i] = -window.price_ratio * p;
            }
            if let Some(i) = h.v2h {
                linear[i] = -p;
            }
            if let Some(i) = h.slack {
                linear[i] = penalty_per_fraction(cfg) / eb;
            }
            constant += p * window.predicted_load[t];
        }
        Self {
            window,
            layout,
            ctx: aging_context(window, cfg),
            frozen: cfg.degradation_denominator_freeze,
            linear,
            constant,
            cost_per_percent: window.battery.cost_per_percent(),
        }
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    /// Capacity loss over the window in percent, generic in the number type.
    pub fn degradation<D: DualNum<Primitive = f64> + Copy>(&self, x: &[D]) -> Result<D, OptimizerError> {
        let w = self.window;
        let eb = w.battery.spec.capacity_kwh;
        let state = &w.degradation;
        let mut q_tot = D::from(state.q_tot);
        let mut q_ch = D::from(state.q_ch);
        let mut soc_prev = D::from(w.soc_initial);
        let mut total = D::from(0.0);
        for t in 0..self.layout.hours.len() {
            let (g2v, v2g, v2h) = self.layout.flows(x, t);
            let out = v2g + v2h;
            let soc = soc_prev + (g2v - out) / eb;
            let aging = self
                .ctx
                .hour(state.age_hours + t as f64, q_tot, q_ch, soc_prev, soc, g2v, out, 1.0)?;
            total += aging.increments.total();
            if !self.frozen {
                q_tot += aging.dq_tot;
                q_ch += aging.dq_ch;
            }
            soc_prev = soc;
        }
        Ok(total)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, OptimizerError> {
        let linear: f64 = self.linear.iter().zip(x).map(|(c, v)| c * v).sum();
        Ok(self.constant + linear + self.cost_per_percent * self.degradation(x)?)
    }

    /// Value, gradient and Hessian.
    pub fn derivatives(&self, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>), OptimizerError> {
        let (bd, mut grad, mut hess) = if self.frozen {
            self.degradation_derivatives_local(x)?
        } else {
            self.degradation_derivatives_dense(x)?
        };
        grad *= self.cost_per_percent;
        hess *= self.cost_per_percent;
        let linear: f64 = self.linear.iter().zip(x).map(|(c, v)| c * v).sum();
        grad += &self.linear;
        Ok((self.constant + linear + self.cost_per_percent * bd, grad, hess))
    }

    /// With frozen denominators each hour depends only on its own
    /// (soc_prev, soc_now, e_in, e_out), which are affine in x. Derivatives
    /// are taken in those four variables and chained through the affine map.
    fn degradation_derivatives_local(&self, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>), OptimizerError> {
        let w = self.window;
        let eb = w.battery.spec.capacity_kwh;
        let n = self.n();
        let state = &w.degradation;
        let mut total = 0.0;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut soc_prev_row = DVector::<f64>::zeros(n);
        let mut soc_prev = w.soc_initial;
        let failure = Cell::new(None);
        for t in 0..self.layout.hours.len() {
            let (g2v, v2g, v2h) = self.layout.flows(x, t);
            let soc_now = soc_prev + (g2v - v2g - v2h) / eb;
            let mut net = vec![0.0; n];
            self.layout.net_row(t, &mut net, 1.0 / eb);
            let soc_now_row = &soc_prev_row + DVector::from_vec(net);
            let h = &self.layout.hours[t];
            let mut e_in_row = DVector::zeros(n);
            e_in_row[h.g2v] = 1.0;
            let mut e_out_row = DVector::zeros(n);
            for i in [h.v2g, h.v2h].into_iter().flatten() {
                e_out_row[i] = 1.0;
            }

            let z = SVector::<f64, 4>::new(soc_prev, soc_now, g2v, v2g + v2h);
            let age = state.age_hours + t as f64;
            let (f, g, hz) = hessian(
                |z: SVector<Dual2SVec64<4>, 4>| {
                    let q_tot = Dual2SVec64::<4>::from(state.q_tot);
                    let q_ch = Dual2SVec64::<4>::from(state.q_ch);
                    match self.ctx.hour(age, q_tot, q_ch, z[0], z[1], z[2], z[3], 1.0) {
                        Ok(a) => a.increments.total(),
                        Err(e) => {
                            failure.set(Some(e));
                            Dual2SVec64::<4>::from(f64::NAN)
                        }
                    }
                },
                &z,
            );
            if let Some(e) = failure.take() {
                return Err(e.into());
            }
            total += f;
            let rows = [&soc_prev_row, &soc_now_row, &e_in_row, &e_out_row];
            // J = stacked rows (4 × n); grad += Jᵀ g, hess += Jᵀ H J
            let mut jac = DMatrix::zeros(4, n);
            for (r, row) in rows.iter().enumerate() {
                jac.row_mut(r).copy_from(&row.transpose());
            }
            grad += jac.tr_mul(&DVector::from_column_slice(g.as_slice()));
            let hz = DMatrix::from_column_slice(4, 4, hz.as_slice());
            hess += jac.tr_mul(&(hz * &jac));
            soc_prev_row = soc_now_row;
            soc_prev = soc_now;
        }
        Ok((total, grad, hess))
    }

    /// Post-increment denominators couple all hours; exact second derivatives
    /// by one hyper-dual pass per Hessian entry.
    fn degradation_derivatives_dense(&self, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>), OptimizerError> {
        let n = self.n();
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut value = self.degradation(x)?;
        let mut xd: Vec<HyperDual64> = x.iter().map(|v| HyperDual64::from_re(*v)).collect();
        for i in 0..n {
            for j in i..n {
                xd[i].eps1 = 1.0;
                xd[j].eps2 = 1.0;
                let r = self.degradation(&xd)?;
                xd[i].eps1 = 0.0;
                xd[j].eps2 = 0.0;
                if i == j {
                    grad[i] = r.eps1;
                    value = r.re;
                }
                hess[(i, j)] = r.eps1eps2;
                hess[(j, i)] = r.eps1eps2;
            }
        }
        Ok((value, grad, hess))
    }
}

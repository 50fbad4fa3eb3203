use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use super::{BatteryError, DegradationParams, DegradationState, PhysicalConstants};

/// How the (sgn(SoC − SoC_ref) + 1)/2 factor is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SocGate {
    /// Signum gate with sgn(0) = 0.
    Exact,
    /// 1/(1 + exp(−x/eps)); differentiable stand-in for the optimizer.
    Logistic { eps: f64 },
}

impl SocGate {
    pub fn from_eps(eps: f64) -> Self {
        if eps > 0.0 {
            Self::Logistic { eps }
        } else {
            Self::Exact
        }
    }

    fn eval<D: DualNum<Primitive = f64> + Copy>(self, x: D) -> D {
        match self {
            Self::Exact => {
                let v = x.re();
                D::from(if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    0.0
                } else {
                    0.5
                })
            }
            Self::Logistic { eps } => ((-x / eps).exp() + 1.0).recip(),
        }
    }
}

/// Which cumulative throughput appears under the square roots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThroughputDenominator {
    /// Cumulative throughput including the current step.
    PostIncrement,
    /// Throughput given as "before" is used as is, floored at `floor_ah`.
    Frozen { floor_ah: f64 },
}

/// Per-mechanism capacity-loss increments, percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MechanismIncrements<D> {
    pub calendar: D,
    pub cycle_ht: D,
    pub cycle_lt: D,
    pub cycle_lthsoc: D,
}

impl<D: DualNum<Primitive = f64> + Copy> MechanismIncrements<D> {
    pub fn total(&self) -> D {
        self.calendar + self.cycle_ht + self.cycle_lt + self.cycle_lthsoc
    }

    pub fn cycle(&self) -> D {
        self.cycle_ht + self.cycle_lt + self.cycle_lthsoc
    }
}

/// Result of one step of the aging model.
#[derive(Debug, Clone, Copy)]
pub struct HourAging<D> {
    pub increments: MechanismIncrements<D>,
    /// Ah moved in and out during the step.
    pub dq_tot: D,
    /// Ah moved in during the step.
    pub dq_ch: D,
}

/// Everything the aging model needs besides the step inputs.
#[derive(Debug, Clone, Copy)]
pub struct AgingContext<'a> {
    pub params: &'a DegradationParams,
    pub consts: &'a PhysicalConstants,
    pub temperature_k: f64,
    pub gate: SocGate,
    pub throughput: ThroughputDenominator,
    /// Half-width of the corner blend applied to the SoC tables; 0 is exact.
    pub curve_smoothing: f64,
}

impl AgingContext<'_> {
    fn arrhenius(&self, ea: f64) -> f64 {
        let rg = self.consts.gas_constant;
        (-ea / rg * (1.0 / self.temperature_k - 1.0 / self.params.t_ref)).exp()
    }

    pub fn calendar_rate<D: DualNum<Primitive = f64> + Copy>(&self, soc: D) -> D {
        let p = self.params;
        let (rg, f) = (self.consts.gas_constant, self.consts.faraday_constant);
        let u_a = p.anode_potential.eval_smooth(soc, self.curve_smoothing);
        let soc_term = ((-u_a + p.u_a_ref) * (p.alpha * f / (rg * p.t_ref))).exp() + p.k0;
        soc_term * (p.k_cal_ref * self.arrhenius(p.ea_cal))
    }

    pub fn cycle_ht_rate(&self) -> f64 {
        self.params.k_cyc_ht_ref * self.arrhenius(self.params.ea_cyc_ht)
    }

    pub fn cycle_lt_rate<D: DualNum<Primitive = f64> + Copy>(&self, i_ch: D) -> D {
        let p = self.params;
        let current = ((i_ch - p.i_ch_ref) * (p.beta_lt / p.reference_capacity_ah)).exp();
        current * (p.k_cyc_lt_ref * self.arrhenius(p.ea_cyc_lt))
    }

    pub fn cycle_lthsoc_rate<D: DualNum<Primitive = f64> + Copy>(&self, i_ch: D, soc: D) -> D {
        let p = self.params;
        let current = ((i_ch - p.i_ch_ref) * (p.beta_lthsoc / p.reference_capacity_ah)).exp();
        current * self.gate.eval(soc - p.soc_ref) * (p.k_cyc_lthsoc_ref * self.arrhenius(p.ea_cyc_lthsoc))
    }

    /// Mean pack OCV over the step, volts.
    pub fn step_voltage<D: DualNum<Primitive = f64> + Copy>(&self, soc_prev: D, soc_now: D) -> D {
        let ocv = &self.params.ocv;
        (ocv.eval_smooth(soc_prev, self.curve_smoothing) + ocv.eval_smooth(soc_now, self.curve_smoothing)) * 0.5
    }

    fn sqrt_law<D: DualNum<Primitive = f64> + Copy>(&self, rate: D, before: D, delta: D) -> D {
        let denom = match self.throughput {
            ThroughputDenominator::PostIncrement => {
                let q = before + delta;
                if q.re() <= 0.0 {
                    return D::from(0.0);
                }
                q.sqrt()
            }
            ThroughputDenominator::Frozen { floor_ah } => {
                if before.re() < floor_ah {
                    D::from(floor_ah.sqrt())
                } else {
                    before.sqrt()
                }
            }
        };
        rate * delta / (denom * 2.0)
    }

    /// Capacity loss over one step without domain checks on the inputs.
    ///
    /// Calendar aging always uses the post-increment age (it does not depend
    /// on decisions); the throughput denominators follow `self.throughput`.
    #[allow(clippy::too_many_arguments)]
    pub fn hour<D: DualNum<Primitive = f64> + Copy>(
        &self,
        age_before_h: f64,
        q_tot_before: D,
        q_ch_before: D,
        soc_prev: D,
        soc_now: D,
        e_in_kwh: D,
        e_out_kwh: D,
        dt_hours: f64,
    ) -> Result<HourAging<D>, BatteryError> {
        let p = self.params;
        let age = (age_before_h + dt_hours).max(p.min_age_h);
        if age <= 0.0 {
            return Err(BatteryError::ZeroAge);
        }
        let volts = self.step_voltage(soc_prev, soc_now);
        let dq_ch = e_in_kwh * 1000.0 / volts;
        let dq_tot = (e_in_kwh + e_out_kwh) * 1000.0 / volts;
        let i_ch = dq_ch / dt_hours;

        let calendar = self.calendar_rate(soc_now) * (dt_hours / (2.0 * age.sqrt()));
        let cycle_ht = self.sqrt_law(D::from(self.cycle_ht_rate()), q_tot_before, dq_tot);
        let cycle_lt = self.sqrt_law(self.cycle_lt_rate(i_ch), q_ch_before, dq_ch);
        let cycle_lthsoc = self.cycle_lthsoc_rate(i_ch, soc_now) * dq_ch;
        Ok(HourAging {
            increments: MechanismIncrements {
                calendar,
                cycle_ht,
                cycle_lt,
                cycle_lthsoc,
            },
            dq_tot,
            dq_ch,
        })
    }
}

fn exact_ctx<'a>(
    t_kelvin: f64,
    params: &'a DegradationParams,
    consts: &'a PhysicalConstants,
) -> Result<AgingContext<'a>, BatteryError> {
    if !(t_kelvin > 0.0) {
        return Err(BatteryError::NonPositiveTemperature(t_kelvin));
    }
    Ok(AgingContext {
        params,
        consts,
        temperature_k: t_kelvin,
        gate: SocGate::Exact,
        throughput: ThroughputDenominator::PostIncrement,
        curve_smoothing: 0.0,
    })
}

fn check_soc(soc: f64) -> Result<f64, BatteryError> {
    if (0.0..=1.0).contains(&soc) {
        Ok(soc)
    } else {
        Err(BatteryError::SocOutOfRange(soc))
    }
}

fn check_dt(dt: f64) -> Result<f64, BatteryError> {
    if dt > 0.0 {
        Ok(dt)
    } else {
        Err(BatteryError::NonPositiveTimeStep(dt))
    }
}

fn check_throughput(dq: f64) -> Result<f64, BatteryError> {
    if dq >= 0.0 {
        Ok(dq)
    } else {
        Err(BatteryError::NegativeThroughput(dq))
    }
}

/// Anode open-circuit potential U_a(SoC), volts.
pub fn anode_potential(soc: f64, params: &DegradationParams) -> Result<f64, BatteryError> {
    params.anode_potential.eval(soc)
}

/// Mean of the pack OCV at both ends of a step, volts.
pub fn step_voltage(soc_prev: f64, soc_now: f64, params: &DegradationParams) -> Result<f64, BatteryError> {
    Ok((params.ocv.eval(soc_prev)? + params.ocv.eval(soc_now)?) / 2.0)
}

/// Calendar stress factor K_cal(T, SoC), %/√h.
pub fn calendar_stress(
    t_kelvin: f64,
    soc: f64,
    params: &DegradationParams,
    consts: &PhysicalConstants,
) -> Result<f64, BatteryError> {
    check_soc(soc)?;
    Ok(exact_ctx(t_kelvin, params, consts)?.calendar_rate(soc))
}

/// Calendar loss over `dt_hours`, evaluated at the post-increment age.
pub fn calendar_step(
    state: &DegradationState,
    t_kelvin: f64,
    soc: f64,
    dt_hours: f64,
    params: &DegradationParams,
    consts: &PhysicalConstants,
) -> Result<f64, BatteryError> {
    check_soc(soc)?;
    check_dt(dt_hours)?;
    let ctx = exact_ctx(t_kelvin, params, consts)?;
    let age = (state.age_hours + dt_hours).max(params.min_age_h);
    if age <= 0.0 {
        return Err(BatteryError::ZeroAge);
    }
    Ok(ctx.calendar_rate(soc) * dt_hours / (2.0 * age.sqrt()))
}

/// High-temperature cycle loss for `dq_tot` Ah of throughput.
pub fn cycle_ht_step(
    state: &DegradationState,
    t_kelvin: f64,
    dq_tot: f64,
    params: &DegradationParams,
    consts: &PhysicalConstants,
) -> Result<f64, BatteryError> {
    check_throughput(dq_tot)?;
    let ctx = exact_ctx(t_kelvin, params, consts)?;
    Ok(ctx.sqrt_law(ctx.cycle_ht_rate(), state.q_tot, dq_tot))
}

/// Low-temperature cycle loss for `dq_ch` Ah charged over `dt_hours`.
pub fn cycle_lt_step(
    state: &DegradationState,
    t_kelvin: f64,
    dq_ch: f64,
    dt_hours: f64,
    params: &DegradationParams,
    consts: &PhysicalConstants,
) -> Result<f64, BatteryError> {
    check_throughput(dq_ch)?;
    check_dt(dt_hours)?;
    let ctx = exact_ctx(t_kelvin, params, consts)?;
    Ok(ctx.sqrt_law(ctx.cycle_lt_rate(dq_ch / dt_hours), state.q_ch, dq_ch))
}

/// Low-temperature high-SoC cycle loss, linear in charged Ah.
pub fn cycle_lthsoc_step(
    _state: &DegradationState,
    t_kelvin: f64,
    dq_ch: f64,
    dt_hours: f64,
    soc: f64,
    params: &DegradationParams,
    consts: &PhysicalConstants,
) -> Result<f64, BatteryError> {
    check_throughput(dq_ch)?;
    check_dt(dt_hours)?;
    check_soc(soc)?;
    let ctx = exact_ctx(t_kelvin, params, consts)?;
    Ok(ctx.cycle_lthsoc_rate(dq_ch / dt_hours, soc) * dq_ch)
}

/// Advances the aging state by one step of charging `e_in_kwh` and
/// discharging `e_out_kwh`.
#[allow(clippy::too_many_arguments)]
pub fn total_degradation_step(
    state: &DegradationState,
    t_kelvin: f64,
    soc_prev: f64,
    soc_now: f64,
    e_in_kwh: f64,
    e_out_kwh: f64,
    dt_hours: f64,
    params: &DegradationParams,
    consts: &PhysicalConstants,
) -> Result<(DegradationState, MechanismIncrements<f64>), BatteryError> {
    check_soc(soc_prev)?;
    check_soc(soc_now)?;
    check_dt(dt_hours)?;
    for e in [e_in_kwh, e_out_kwh] {
        if !(e >= 0.0) {
            return Err(BatteryError::NegativeEnergy(e));
        }
    }
    let ctx = exact_ctx(t_kelvin, params, consts)?;
    let h = ctx.hour(
        state.age_hours,
        state.q_tot,
        state.q_ch,
        soc_prev,
        soc_now,
        e_in_kwh,
        e_out_kwh,
        dt_hours,
    )?;
    let next = state.advance(dt_hours, h.dq_tot, h.dq_ch, &h.increments);
    Ok((next, h.increments))
}

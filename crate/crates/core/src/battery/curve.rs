use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use super::BatteryError;

/// Piecewise-linear table on SoC ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocCurve {
    soc: Vec<f64>,
    values: Vec<f64>,
}

impl SocCurve {
    pub fn new(soc: Vec<f64>, values: Vec<f64>) -> Result<Self, BatteryError> {
        if soc.len() != values.len() {
            return Err(BatteryError::InvalidCurve(format!(
                "{} knots but {} values",
                soc.len(),
                values.len()
            )));
        }
        if soc.len() < 2 {
            return Err(BatteryError::InvalidCurve("need at least two knots".into()));
        }
        if soc[0] != 0.0 || *soc.last().unwrap() != 1.0 {
            return Err(BatteryError::InvalidCurve("knots must span exactly [0, 1]".into()));
        }
        if soc.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BatteryError::InvalidCurve("knots must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BatteryError::InvalidCurve("non-finite value".into()));
        }
        Ok(Self { soc, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.soc
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn is_monotone(&self) -> bool {
        self.is_nondecreasing() || self.values.windows(2).all(|w| w[1] <= w[0])
    }

    /// Evaluates the table, rejecting SoC outside [0, 1].
    pub fn eval(&self, soc: f64) -> Result<f64, BatteryError> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(BatteryError::SocOutOfRange(soc));
        }
        Ok(self.eval_extended(soc))
    }

    /// Evaluates the table for any argument; outside [0, 1] the end segments
    /// are extended linearly. Interior-point iterates may leave the box
    /// slightly before converging.
    pub fn eval_extended<D: DualNum<Primitive = f64> + Copy>(&self, soc: D) -> D {
        let i = self.segment(soc.re());
        let (x0, x1) = (self.soc[i], self.soc[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        (soc - x0) * ((y1 - y0) / (x1 - x0)) + y0
    }

    /// Like [`eval_extended`](Self::eval_extended) but each interior corner is
    /// replaced by a quartic blend over ±`width` (capped at half the
    /// adjacent segments), continuous up to the second derivative.
    pub fn eval_smooth<D: DualNum<Primitive = f64> + Copy>(&self, soc: D, width: f64) -> D {
        if width <= 0.0 {
            return self.eval_extended(soc);
        }
        let x = soc.re();
        let i = self.segment(x);
        let interior = 1..self.soc.len() - 1;
        for j in [i, i + 1] {
            if !interior.contains(&j) {
                continue;
            }
            let k = self.soc[j];
            let w = width.min(0.5 * (k - self.soc[j - 1])).min(0.5 * (self.soc[j + 1] - k));
            if (x - k).abs() < w {
                let s1 = self.slope(j - 1);
                let s2 = self.slope(j);
                let u = soc - k;
                // slope eases from s1 to s2 along a smoothstep in tau
                let tau = (u + w) * (0.5 / w);
                let ramp = tau.powi(3) * 2.0 - tau.powi(4);
                return ramp * ((s2 - s1) * w) + u * s1 + self.values[j];
            }
        }
        self.eval_extended(soc)
    }

    fn slope(&self, seg: usize) -> f64 {
        (self.values[seg + 1] - self.values[seg]) / (self.soc[seg + 1] - self.soc[seg])
    }

    fn segment(&self, x: f64) -> usize {
        let last = self.soc.len() - 2;
        match self.soc.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(last),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_dual::Dual2_64;

    fn curve() -> SocCurve {
        SocCurve::new(vec![0.0, 0.25, 0.5, 1.0], vec![1.0, 2.0, 2.0, 6.0]).unwrap()
    }

    #[test]
    fn knots_are_reproduced() {
        let c = curve();
        for (s, v) in c.knots().iter().zip(c.values()) {
            assert_eq!(c.eval(*s).unwrap(), *v);
        }
    }

    #[test]
    fn midpoint_is_mean_of_neighbours() {
        let c = curve();
        assert!((c.eval(0.125).unwrap() - 1.5).abs() < 1e-15);
        assert!((c.eval(0.75).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn flat_segment() {
        assert_eq!(curve().eval(0.4).unwrap(), 2.0);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(curve().eval(1.01), Err(BatteryError::SocOutOfRange(_))));
        assert!(curve().eval(-1e-9).is_err());
        // extension is linear on the end segments
        assert!((curve().eval_extended(1.1_f64) - 6.8).abs() < 1e-12);
        assert!((curve().eval_extended(-0.1_f64) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn smoothed_corners() {
        let c = curve();
        // away from corners the blend is the plain table
        assert_eq!(c.eval_smooth(0.4_f64, 0.01), 2.0);
        assert_eq!(c.eval_smooth(0.1_f64, 0.0), c.eval(0.1).unwrap());
        // continuity and slopes at the blend edges around the 0.25 knot
        let w = 0.01;
        for x in [0.25 - w, 0.25 + w] {
            let plain = c.eval(x).unwrap();
            assert!((c.eval_smooth(x - 1e-12, w) - plain).abs() < 1e-9);
            assert!((c.eval_smooth(x + 1e-12, w) - plain).abs() < 1e-9);
        }
        // corner deviation is 3(s2 - s1)·w/16
        assert!((c.eval_smooth(0.25_f64, w) - (2.0 - 3.0 * 4.0 * w / 16.0)).abs() < 1e-12);
        // first and second derivatives match the plain segments at the edges
        let d = |x: f64| c.eval_smooth(Dual2_64::from_re(x).derivative(), w);
        for (x, slope) in [(0.25 - w, 4.0), (0.25 + w, 0.0)] {
            for e in [-1e-12, 1e-12] {
                let v = d(x + e);
                assert!((v.v1 - slope).abs() < 1e-6, "{x} {}", v.v1);
                assert!(v.v2.abs() < 1e-3, "{x} {}", v.v2);
            }
        }
    }

    #[test]
    fn malformed_tables() {
        assert!(SocCurve::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(SocCurve::new(vec![0.0, 0.9], vec![1.0, 2.0]).is_err());
        assert!(SocCurve::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0; 4]).is_err());
    }
}

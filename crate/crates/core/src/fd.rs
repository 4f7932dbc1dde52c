//! Triangular fundamental diagram.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Slack allowed on density bounds to absorb round-off in clamped values.
const DENSITY_SLACK: f64 = 1e-12;

/// Triangular flow-density relation: free-flow speed `v_f`, optimal
/// (critical) density `k_c` and jam density `k_j`.
///
/// The backward wave speed `w_c = v_f k_c / (k_j - k_c)` is derived, and
/// `k_c < k_j / 2` keeps it strictly below `v_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFd", into = "RawFd")]
pub struct FdParams {
    v_f: f64,
    k_c: f64,
    k_j: f64,
    w_c: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawFd {
    v_f: f64,
    k_c: f64,
    k_j: f64,
    #[serde(default, skip_deserializing)]
    w_c: f64,
}

impl TryFrom<RawFd> for FdParams {
    type Error = Error;

    fn try_from(raw: RawFd) -> Result<Self> {
        FdParams::new(raw.v_f, raw.k_c, raw.k_j)
    }
}

impl From<FdParams> for RawFd {
    fn from(fd: FdParams) -> Self {
        RawFd {
            v_f: fd.v_f,
            k_c: fd.k_c,
            k_j: fd.k_j,
            w_c: fd.w_c,
        }
    }
}

impl FdParams {
    pub fn new(v_f: f64, k_c: f64, k_j: f64) -> Result<Self> {
        if !(v_f.is_finite() && v_f > 0.0) {
            return Err(Error::Config(format!("v_f must be positive, got {v_f}")));
        }
        if !(k_j.is_finite() && k_j > 0.0) {
            return Err(Error::Config(format!("k_j must be positive, got {k_j}")));
        }
        if !(k_c > 0.0 && k_c < k_j / 2.0) {
            return Err(Error::Config(format!(
                "k_c must lie in (0, k_j/2) = (0, {}), got {k_c}",
                k_j / 2.0
            )));
        }
        let w_c = v_f * k_c / (k_j - k_c);
        Ok(FdParams { v_f, k_c, k_j, w_c })
    }

    pub fn v_f(&self) -> f64 {
        self.v_f
    }

    pub fn k_c(&self) -> f64 {
        self.k_c
    }

    pub fn k_j(&self) -> f64 {
        self.k_j
    }

    /// Backward wave speed.
    pub fn w_c(&self) -> f64 {
        self.w_c
    }

    pub fn capacity(&self) -> f64 {
        self.v_f * self.k_c
    }

    /// Rejects a free-flow speed the grid cannot carry without violating
    /// the CFL bound `v_f <= dx / dt`.
    pub fn check_cfl(&self, grid: &GridSpec) -> Result<()> {
        let max = grid.max_speed();
        if self.v_f > max * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "CFL violated: v_f = {} exceeds dx/dt = {max}",
                self.v_f
            )));
        }
        Ok(())
    }

    /// Interface flow between a sending density and a receiving density:
    /// `min(k_sending * v_f, w_c * (k_j - k_receiving))`.
    pub fn flow(&self, k_sending: f64, k_receiving: f64) -> Result<f64> {
        self.check_density(k_sending, "sending")?;
        self.check_density(k_receiving, "receiving")?;
        Ok(self.flow_unchecked(k_sending.clamp(0.0, self.k_j), k_receiving.clamp(0.0, self.k_j)))
    }

    #[inline]
    pub(crate) fn flow_unchecked(&self, k_sending: f64, k_receiving: f64) -> f64 {
        // w_c (k_j - k) written as capacity scaled by (k_j - k) / (k_j - k_c),
        // which is exactly capacity at k = k_c
        let supply = self.capacity() * ((self.k_j - k_receiving) / (self.k_j - self.k_c));
        (k_sending * self.v_f).min(supply)
    }

    pub(crate) fn check_density(&self, k: f64, what: &str) -> Result<()> {
        let slack = DENSITY_SLACK * self.k_j;
        if !(k >= -slack && k <= self.k_j + slack) {
            return Err(Error::Domain(format!(
                "{what} density {k} outside [0, k_j = {}]",
                self.k_j
            )));
        }
        Ok(())
    }
}

/// Free function form of [`FdParams::flow`].
pub fn flow(fd: &FdParams, k_sending: f64, k_receiving: f64) -> Result<f64> {
    fd.flow(k_sending, k_receiving)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_fd() -> FdParams {
        FdParams::new(10.0, 0.05, 0.15385).unwrap()
    }

    #[test]
    fn empty_road_has_zero_flow() {
        assert_eq!(example_fd().flow(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn demand_limited_flow() {
        // min(0.03 * 10, w_c * (0.15385 - 0.03)) with w_c ~ 4.8146
        let q = example_fd().flow(0.03, 0.03).unwrap();
        assert!((q - 0.3).abs() < 1e-12);
    }

    #[test]
    fn supply_at_critical_density_equals_capacity() {
        let fd = example_fd();
        let q = fd.flow(0.12, 0.05).unwrap();
        assert!((q - 0.5).abs() < 1e-12, "{q}");
        assert!((fd.w_c() * (fd.k_j() - fd.k_c()) - fd.capacity()).abs() < 1e-12);
    }

    #[test]
    fn capacity_identity_is_exact() {
        let fd = example_fd();
        assert_eq!(fd.flow(fd.k_c(), fd.k_c()).unwrap(), fd.v_f() * fd.k_c());
    }

    #[test]
    fn out_of_domain_density_is_rejected() {
        let fd = example_fd();
        assert!(matches!(fd.flow(-0.01, 0.0), Err(Error::Domain(_))));
        assert!(matches!(fd.flow(0.0, 0.2), Err(Error::Domain(_))));
        assert!(matches!(fd.flow(f64::NAN, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(FdParams::new(0.0, 0.05, 0.15).is_err());
        assert!(FdParams::new(10.0, 0.08, 0.15).is_err());
        assert!(FdParams::new(10.0, 0.0, 0.15).is_err());
        assert!(FdParams::new(10.0, 0.05, -1.0).is_err());
    }

    #[test]
    fn cfl_check() {
        let g = GridSpec::new(100.0, 16.0, 20.0, 2.0).unwrap();
        assert!(example_fd().check_cfl(&g).is_ok());
        let fast = FdParams::new(10.5, 0.05, 0.15385).unwrap();
        assert!(matches!(fast.check_cfl(&g), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn wave_speed_below_free_flow(v_f in 0.1f64..30.0, frac in 0.01f64..0.99, k_j in 0.05f64..0.3) {
            let fd = FdParams::new(v_f, frac * k_j / 2.0, k_j).unwrap();
            prop_assert!(fd.w_c() > 0.0 && fd.w_c() < fd.v_f());
        }

        #[test]
        fn flow_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0, r in 0.0f64..1.0, d in 0.0f64..0.5) {
            let fd = example_fd();
            let kj = fd.k_j();
            let (s, rcv) = (a * kj, r * kj);
            let s_up = (s + d * kj).min(kj);
            let r_up = (rcv + d * kj).min(kj);
            prop_assert!(fd.flow(s_up, rcv).unwrap() >= fd.flow(s, rcv).unwrap());
            prop_assert!(fd.flow(s, r_up).unwrap() <= fd.flow(s, rcv).unwrap());
            prop_assert!(fd.flow(b * kj, rcv).unwrap() >= 0.0);
        }
    }
}

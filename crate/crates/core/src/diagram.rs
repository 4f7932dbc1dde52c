//! Trajectories and the space-time diagram recorded during one camera run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
}

impl Sample {
    pub fn new(t: f64, x: f64) -> Self {
        Sample { t, x }
    }
}

/// One vehicle's (time, position) path along the link, strictly
/// increasing in time. Positions between samples are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle_id: String,
    samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new(vehicle_id: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let vehicle_id = vehicle_id.into();
        for s in &samples {
            if !(s.t.is_finite() && s.x.is_finite()) {
                return Err(Error::Domain(format!(
                    "trajectory {vehicle_id}: non-finite sample ({}, {})",
                    s.t, s.x
                )));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::Domain(format!(
                "trajectory {vehicle_id}: timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Trajectory { vehicle_id, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    pub fn end_time(&self) -> Option<f64> {
        self.samples.last().map(|s| s.t)
    }

    /// Time between the first and last sample.
    pub fn duration(&self) -> f64 {
        match (self.start_time(), self.end_time()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Linearly interpolated position, `None` outside the sampled span.
    pub fn position_at(&self, t: f64) -> Option<f64> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t || t > s[s.len() - 1].t {
            return None;
        }
        let i = s.partition_point(|p| p.t <= t);
        if i == 0 {
            return Some(s[0].x);
        }
        if i == s.len() {
            return Some(s[i - 1].x);
        }
        let (a, b) = (s[i - 1], s[i]);
        Some(a.x + (b.x - a.x) * (t - a.t) / (b.t - a.t))
    }

    /// Like [`position_at`](Self::position_at) but holds the first/last
    /// position outside the sampled span.
    pub fn position_clamped(&self, t: f64) -> Option<f64> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t <= first.t {
            Some(first.x)
        } else if t >= last.t {
            Some(last.x)
        } else {
            self.position_at(t)
        }
    }

    /// Clips every position into `[0, link_length]`.
    pub fn clip_positions(&mut self, link_length: f64) {
        for s in &mut self.samples {
            s.x = s.x.clamp(0.0, link_length);
        }
    }
}

/// Camera field of view: vehicles whose distance ahead of the camera lies
/// in `[near, far]` are visible. `far` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov {
    pub near: f64,
    pub far: f64,
}

impl Fov {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if near.is_nan() || far.is_nan() || near >= far {
            return Err(Error::Config(format!("fov requires near < far, got [{near}, {far}]")));
        }
        Ok(Fov { near, far })
    }

    pub fn contains(&self, distance: f64) -> bool {
        distance >= self.near && distance <= self.far
    }
}

/// Vehicle trajectories of the observed (opposite) lane, the camera's own
/// trajectory and its field of view for one run.
///
/// Link coordinates run in the observed lane's direction of travel: vehicles
/// enter at `x = 0`, leave at `x = L`. The camera drives the other way, so a
/// vehicle's distance ahead of the camera is `camera_x - vehicle_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeDiagram {
    pub grid: GridSpec,
    pub vehicles: Vec<Trajectory>,
    pub camera: Trajectory,
    pub fov: Fov,
}

/// Slack on the camera time span check.
const SPAN_TOL: f64 = 1e-6;
/// Slack on field-of-view membership, in meters.
const VIS_TOL: f64 = 1e-7;
/// Minimum spacing between an inserted crossing and an existing sample.
const TIME_EPS: f64 = 1e-9;

impl SpaceTimeDiagram {
    pub fn new(
        grid: GridSpec,
        vehicles: Vec<Trajectory>,
        camera: Trajectory,
        fov: Fov,
    ) -> Result<Self> {
        let (Some(t0), Some(t1)) = (camera.start_time(), camera.end_time()) else {
            return Err(Error::Domain("camera trajectory has no samples".into()));
        };
        if t0 > SPAN_TOL || t1 < grid.total_time() - SPAN_TOL {
            return Err(Error::Domain(format!(
                "camera samples span [{t0}, {t1}], must cover [0, {}]",
                grid.total_time()
            )));
        }
        Fov::new(fov.near, fov.far)?;
        Ok(SpaceTimeDiagram {
            grid,
            vehicles,
            camera,
            fov,
        })
    }

    /// Camera position at `t`, held constant outside its sampled span.
    pub fn camera_position(&self, t: f64) -> f64 {
        self.camera.position_clamped(t).unwrap_or(0.0)
    }

    /// Distance of a point ahead of the camera along its driving direction.
    pub fn distance_ahead(&self, t: f64, x: f64) -> f64 {
        self.camera_position(t) - x
    }

    /// Total vehicle-seconds carried by the vehicle trajectories.
    pub fn vehicle_seconds(&self) -> f64 {
        self.vehicles.iter().map(Trajectory::duration).sum()
    }

    /// Restricts every vehicle trajectory to the stretch where it is inside the
    /// camera's field of view. Crossing points of the view boundary are
    /// inserted so visible portions keep their exact extent; vehicles never
    /// in view are dropped. Applying it twice changes nothing.
    pub fn apply_camera_mask(&self) -> SpaceTimeDiagram {
        let mut vehicles = Vec::new();
        for tr in &self.vehicles {
            let pieces = self.visible_pieces(tr);
            let many = pieces.len() > 1;
            for (n, samples) in pieces.into_iter().enumerate() {
                let id = if many {
                    format!("{}~{}", tr.vehicle_id, n + 1)
                } else {
                    tr.vehicle_id.clone()
                };
                vehicles.push(Trajectory {
                    vehicle_id: id,
                    samples,
                });
            }
        }
        SpaceTimeDiagram {
            grid: self.grid,
            vehicles,
            camera: self.camera.clone(),
            fov: self.fov,
        }
    }

    fn visible_at(&self, t: f64, x: f64) -> bool {
        let d = self.distance_ahead(t, x);
        d >= self.fov.near - VIS_TOL && d <= self.fov.far + VIS_TOL
    }

    /// Time in `[a.t, b.t]` where the vehicle crosses the view boundary,
    /// returned on the visible side of the crossing.
    fn boundary_crossing(&self, a: Sample, b: Sample, a_visible: bool) -> Sample {
        let at = |t: f64| {
            let x = a.x + (b.x - a.x) * (t - a.t) / (b.t - a.t);
            Sample::new(t, x)
        };
        let (mut vis, mut hid) = if a_visible { (a.t, b.t) } else { (b.t, a.t) };
        for _ in 0..80 {
            let mid = 0.5 * (vis + hid);
            if mid == vis || mid == hid {
                break;
            }
            let s = at(mid);
            if self.visible_at(s.t, s.x) {
                vis = mid;
            } else {
                hid = mid;
            }
        }
        at(vis)
    }

    fn visible_pieces(&self, tr: &Trajectory) -> Vec<Vec<Sample>> {
        let s = tr.samples();
        let mut pieces = Vec::new();
        let mut cur: Vec<Sample> = Vec::new();
        let mut prev_visible = false;
        for (i, &p) in s.iter().enumerate() {
            let vis = self.visible_at(p.t, p.x);
            if i > 0 && vis != prev_visible {
                let c = self.boundary_crossing(s[i - 1], p, prev_visible);
                if vis {
                    if p.t - c.t > TIME_EPS {
                        cur.push(c);
                    }
                } else if cur.last().is_some_and(|l| c.t - l.t > TIME_EPS) {
                    cur.push(c);
                }
            }
            if vis {
                cur.push(p);
            } else if !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
            prev_visible = vis;
        }
        if !cur.is_empty() {
            pieces.push(cur);
        }
        pieces
    }

    /// Average camera speed while it is on the link.
    pub fn mean_camera_speed(&self) -> f64 {
        let s = self.camera.samples();
        let (Some(first), Some(_)) = (s.first(), s.last()) else {
            return 0.0;
        };
        // time at which the camera stops moving (exits the link or the horizon ends)
        let mut moving_until = first.t;
        for w in s.windows(2) {
            if (w[1].x - w[0].x).abs() > 1e-12 {
                moving_until = w[1].t;
            }
        }
        let travelled: f64 = s.windows(2).map(|w| (w[1].x - w[0].x).abs()).sum();
        let elapsed = moving_until - first.t;
        if elapsed > 0.0 {
            travelled / elapsed
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone_time() {
        let s = vec![Sample::new(0.0, 0.0), Sample::new(1.0, 1.0), Sample::new(1.0, 2.0)];
        assert!(Trajectory::new("v", s).is_err());
    }

    #[test]
    fn interpolates_linearly() {
        let tr = Trajectory::new("v", vec![Sample::new(0.0, 0.0), Sample::new(2.0, 20.0)]).unwrap();
        assert_eq!(tr.position_at(0.5), Some(5.0));
        assert_eq!(tr.position_at(2.0), Some(20.0));
        assert_eq!(tr.position_at(2.5), None);
        assert_eq!(tr.position_clamped(2.5), Some(20.0));
    }

    #[test]
    fn camera_must_cover_horizon() {
        let g = GridSpec::new(100.0, 16.0, 20.0, 2.0).unwrap();
        let fov = Fov::new(10.0, 60.0).unwrap();
        let short = Trajectory::new("cam", vec![Sample::new(0.0, 100.0), Sample::new(10.0, 0.0)]).unwrap();
        assert!(SpaceTimeDiagram::new(g, vec![], short, fov).is_err());
        let full = Trajectory::new("cam", vec![Sample::new(0.0, 100.0), Sample::new(16.0, 0.0)]).unwrap();
        assert!(SpaceTimeDiagram::new(g, vec![], full, fov).is_ok());
    }

    #[test]
    fn fov_ordering() {
        assert!(Fov::new(60.0, 10.0).is_err());
        assert!(Fov::new(0.0, f64::INFINITY).is_ok());
    }

    fn sweep(fov: Fov, vehicles: Vec<Trajectory>) -> SpaceTimeDiagram {
        let g = GridSpec::new(100.0, 16.0, 20.0, 2.0).unwrap();
        let cam = Trajectory::new(
            "cam",
            vec![Sample::new(0.0, 100.0), Sample::new(10.0, 0.0), Sample::new(16.0, 0.0)],
        )
        .unwrap();
        SpaceTimeDiagram::new(g, vehicles, cam, fov).unwrap()
    }

    fn straight(id: &str, t0: f64, x0: f64, v: f64, t1: f64) -> Trajectory {
        let n = ((t1 - t0) * 10.0).round() as usize;
        let s = (0..=n)
            .map(|m| {
                let t = t0 + m as f64 / 10.0;
                Sample::new(t, (x0 + v * (t - t0)).min(100.0))
            })
            .collect();
        Trajectory::new(id, s).unwrap()
    }

    #[test]
    fn mask_keeps_visible_stretch_with_exact_edges() {
        // vehicle at 5 m/s from x=0, camera at 10 m/s from x=100: distance 100 - 15 t
        let d = sweep(Fov::new(10.0, 60.0).unwrap(), vec![straight("a", 0.0, 0.0, 5.0, 6.0)]);
        let m = d.apply_camera_mask();
        assert_eq!(m.vehicles.len(), 1);
        let tr = &m.vehicles[0];
        let (t0, t1) = (tr.start_time().unwrap(), tr.end_time().unwrap());
        assert!((t0 - 40.0 / 15.0).abs() < 1e-6, "{t0}");
        assert!((t1 - 6.0).abs() < 1e-6, "{t1}");
        for s in tr.samples() {
            let dist = m.distance_ahead(s.t, s.x);
            assert!((10.0 - 1e-6..=60.0 + 1e-6).contains(&dist));
        }
        assert_eq!(m.apply_camera_mask(), m);
    }

    #[test]
    fn vehicle_outside_view_is_dropped() {
        // enters after the camera has passed its position
        let d = sweep(Fov::new(10.0, 60.0).unwrap(), vec![straight("late", 12.0, 0.0, 5.0, 16.0)]);
        assert!(d.apply_camera_mask().vehicles.is_empty());
    }

    #[test]
    fn unbounded_view_ahead_of_a_parked_camera_is_identity() {
        let g = GridSpec::new(100.0, 16.0, 20.0, 2.0).unwrap();
        let cam = Trajectory::new("cam", vec![Sample::new(0.0, 100.0), Sample::new(16.0, 100.0)]).unwrap();
        let d = SpaceTimeDiagram::new(
            g,
            vec![straight("a", 0.0, 0.0, 6.0, 16.0), straight("b", 3.0, 0.0, 10.0, 13.0)],
            cam,
            Fov::new(0.0, f64::INFINITY).unwrap(),
        )
        .unwrap();
        assert_eq!(d.apply_camera_mask(), d);
    }

    #[test]
    fn camera_speed_ignores_parked_tail() {
        let g = GridSpec::new(100.0, 16.0, 20.0, 2.0).unwrap();
        let cam = Trajectory::new(
            "cam",
            vec![Sample::new(0.0, 100.0), Sample::new(10.0, 0.0), Sample::new(16.0, 0.0)],
        )
        .unwrap();
        let d = SpaceTimeDiagram::new(g, vec![], cam, Fov::new(10.0, 60.0).unwrap()).unwrap();
        assert!((d.mean_camera_speed() - 10.0).abs() < 1e-12);
    }
}

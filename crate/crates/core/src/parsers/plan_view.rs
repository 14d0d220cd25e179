//! Reference-line geometry records and their sampling.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Polyline, Pose2};
use crate::map::MapError;

/// Fine step (meters) used to tabulate arc length of cubic segments.
const CUBIC_TABLE_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentShape {
    Line,
    Arc {
        curvature: f64,
    },
    Spiral {
        curv_start: f64,
        curv_end: f64,
    },
    /// Lateral offset `v(u) = a + b·u + c·u² + d·u³` in the start frame.
    Poly3 {
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    },
    /// Parametric cubic pair; `normalized` selects p ∈ [0,1] instead of [0,length].
    ParamPoly3 {
        u: [f64; 4],
        v: [f64; 4],
        normalized: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanViewSegment {
    pub s_offset: f64,
    pub start: Pose2,
    pub length: f64,
    pub shape: SegmentShape,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledPose {
    /// Arc length from the segment start.
    pub s: f64,
    pub pose: Pose2,
}

fn cubic(c: &[f64; 4], p: f64) -> f64 {
    c[0] + p * (c[1] + p * (c[2] + p * c[3]))
}

fn cubic_slope(c: &[f64; 4], p: f64) -> f64 {
    c[1] + p * (2.0 * c[2] + p * 3.0 * c[3])
}

impl PlanViewSegment {
    pub fn validate(&self) -> Result<(), MapError> {
        let mut params = vec![
            self.s_offset,
            self.start.position.x,
            self.start.position.y,
            self.start.heading,
            self.length,
        ];
        match self.shape {
            SegmentShape::Line => {}
            SegmentShape::Arc { curvature } => params.push(curvature),
            SegmentShape::Spiral {
                curv_start,
                curv_end,
            } => params.extend([curv_start, curv_end]),
            SegmentShape::Poly3 { a, b, c, d } => params.extend([a, b, c, d]),
            SegmentShape::ParamPoly3 { u, v, .. } => {
                params.extend(u);
                params.extend(v);
            }
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(MapError::malformed(
                format!("geometry at s={}", self.s_offset),
                "non-finite parameter",
            ));
        }
        if self.length <= 0.0 {
            return Err(MapError::malformed(
                format!("geometry at s={}", self.s_offset),
                "non-positive length",
            ));
        }
        Ok(())
    }

    /// Poses at ascending local arc lengths in `[0, length]`.
    pub fn poses_at(&self, ss: &[f64]) -> Result<Vec<SampledPose>, MapError> {
        self.validate()?;
        let x0 = self.start.position;
        let h0 = self.start.heading;
        let out = match self.shape {
            SegmentShape::Line => ss
                .iter()
                .map(|&s| SampledPose {
                    s,
                    pose: Pose2::from_parts(x0 + Point2::from_angle(h0) * s, h0),
                })
                .collect(),
            SegmentShape::Arc { curvature } if curvature.abs() < 1e-12 => ss
                .iter()
                .map(|&s| SampledPose {
                    s,
                    pose: Pose2::from_parts(x0 + Point2::from_angle(h0) * s, h0),
                })
                .collect(),
            SegmentShape::Arc { curvature: k } => ss
                .iter()
                .map(|&s| {
                    let h = h0 + k * s;
                    let p = Point2::new(
                        x0.x + (h.sin() - h0.sin()) / k,
                        x0.y - (h.cos() - h0.cos()) / k,
                    );
                    SampledPose {
                        s,
                        pose: Pose2::from_parts(p, h),
                    }
                })
                .collect(),
            SegmentShape::Spiral {
                curv_start,
                curv_end,
            } => self.spiral_poses(ss, curv_start, curv_end),
            SegmentShape::Poly3 { a, b, c, d } => {
                let coeffs = [a, b, c, d];
                self.cubic_poses(ss, |uparam| {
                    (
                        Point2::new(uparam, cubic(&coeffs, uparam)),
                        Point2::new(1.0, cubic_slope(&coeffs, uparam)),
                    )
                })?
            }
            SegmentShape::ParamPoly3 { u, v, normalized } => {
                let scale = if normalized { 1.0 / self.length } else { 1.0 };
                // tabulated over arc-length-like parameter t ∈ [0, length], p = t·scale
                self.cubic_poses(ss, |t| {
                    let p = t * scale;
                    (
                        Point2::new(cubic(&u, p), cubic(&v, p)),
                        Point2::new(cubic_slope(&u, p), cubic_slope(&v, p)),
                    )
                })?
            }
        };
        Ok(out)
    }

    fn spiral_poses(&self, ss: &[f64], k0: f64, k1: f64) -> Vec<SampledPose> {
        let len = self.length;
        let rate = (k1 - k0) / len;
        let h0 = self.start.heading;
        let heading = |s: f64| h0 + k0 * s + 0.5 * rate * s * s;
        let deriv = |s: f64| Point2::from_angle(heading(s));
        // nominal station spacing is the widest gap (the last gap may be a remainder)
        let nominal = ss.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        let max_step = if nominal > 0.0 { nominal.min(0.1) } else { 0.1 } / 4.0;
        let mut out = Vec::with_capacity(ss.len());
        let mut pos = self.start.position;
        let mut at = 0.0;
        for &s in ss {
            let span = s - at;
            if span > 0.0 {
                let n = (span / max_step).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for i in 0..n {
                    let a = at + i as f64 * h;
                    // classical RK4; the right-hand side depends only on s
                    let k1v = deriv(a);
                    let k2v = deriv(a + 0.5 * h);
                    let k4v = deriv(a + h);
                    pos = pos + (k1v + k2v * 4.0 + k4v) * (h / 6.0);
                }
                at = s;
            }
            out.push(SampledPose {
                s,
                pose: Pose2::from_parts(pos, heading(s)),
            });
        }
        out
    }

    /// Samples a locally-parametrized cubic curve at true arc lengths. The
    /// curve's own arc length is rescaled to the declared segment length.
    fn cubic_poses(
        &self,
        ss: &[f64],
        eval: impl Fn(f64) -> (Point2, Point2),
    ) -> Result<Vec<SampledPose>, MapError> {
        let target = self.length;
        let start = self.start;
        let local = |t: f64| {
            let (p, d) = eval(t);
            (start.transform_from_local(p), d.angle() + start.heading)
        };
        // For poly3 the parameter is u (not arc length): march until the arc
        // length reaches the declared length. For paramPoly3 t spans [0, length].
        let is_poly3 = matches!(self.shape, SegmentShape::Poly3 { .. });
        let mut table_t = vec![0.0];
        let mut table_s = vec![0.0];
        let mut prev = local(0.0).0;
        let step = CUBIC_TABLE_STEP.min(target / 100.0);
        let mut t = 0.0;
        loop {
            let next_t = if is_poly3 {
                t + step
            } else {
                (t + step).min(target)
            };
            let p = local(next_t).0;
            let ds = p.distance(prev);
            let s_next = table_s.last().unwrap() + ds;
            if is_poly3 && s_next >= target {
                // final partial step by linear fraction
                let frac = (target - table_s.last().unwrap()) / ds.max(1e-300);
                table_t.push(t + frac * (next_t - t));
                table_s.push(target);
                break;
            }
            table_t.push(next_t);
            table_s.push(s_next);
            prev = p;
            t = next_t;
            if !is_poly3 && t >= target {
                break;
            }
            if table_t.len() > 50_000_000 {
                return Err(MapError::malformed("poly3", "arc length does not converge"));
            }
        }
        let total = *table_s.last().unwrap();
        if total <= 0.0 {
            return Err(MapError::malformed("poly3", "zero-length curve"));
        }
        Ok(ss
            .iter()
            .map(|&s| {
                let want = (s / target) * total;
                let i = match table_s.binary_search_by(|v| v.total_cmp(&want)) {
                    Ok(i) => i,
                    Err(i) => i.min(table_s.len() - 1),
                };
                let tparam = if i == 0 {
                    table_t[0]
                } else {
                    let (s0, s1) = (table_s[i - 1], table_s[i]);
                    let f = if s1 > s0 {
                        (want - s0) / (s1 - s0)
                    } else {
                        0.0
                    };
                    table_t[i - 1] + f * (table_t[i] - table_t[i - 1])
                };
                let (p, h) = local(tparam);
                SampledPose {
                    s,
                    pose: Pose2::from_parts(p, h),
                }
            })
            .collect())
    }

    pub fn end_pose(&self) -> Result<Pose2, MapError> {
        Ok(self.poses_at(&[0.0, self.length])?[1].pose)
    }
}

/// Arc-length stations `0, ds, 2ds, …, length` (endpoint always included).
pub fn stations(length: f64, ds: f64) -> Vec<f64> {
    let n = (length / ds).floor() as usize;
    let mut out: Vec<f64> = (0..=n).map(|i| i as f64 * ds).collect();
    if length - out.last().copied().unwrap_or(0.0) > 1e-9 {
        out.push(length);
    } else if let Some(last) = out.last_mut() {
        *last = length;
    }
    out
}

/// Samples a plan-view segment every `ds` meters.
pub fn sample_plan_view(segment: &PlanViewSegment, ds: f64) -> Result<Polyline, MapError> {
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(MapError::malformed(
            "plan view",
            format!("invalid step {ds}"),
        ));
    }
    segment.validate()?;
    let poses = segment.poses_at(&stations(segment.length, ds))?;
    Ok(Polyline::new_dedup(
        poses.into_iter().map(|p| p.pose.position).collect(),
    )?)
}

//! Track centerlines built from straight and constant-curvature segments, and
//! conversion between world coordinates and track (Frenet) coordinates.
//!
//! Sign conventions: curvature is positive for left turns, the lateral offset
//! `d` is positive to the left of the centerline, and headings are measured
//! counter-clockwise from the world x axis.

mod builtin;
mod file;

pub use builtin::{builtin, builtin_names, BUILTIN_TRACKS};
pub use file::TrackFileError;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{wrap_angle, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("track has no segments")]
    EmptyTrack,
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("half width must be positive, got {0}")]
    InvalidHalfWidth(f64),
    #[error("closed track does not close: position gap {gap:.3e} m, heading gap {heading_gap:.3e} rad")]
    NotClosed { gap: f64, heading_gap: f64 },
    #[error("pose is {distance:.3} m from the centerline, beyond the {bound:.3} m corridor")]
    OutOfCorridor { distance: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Straight,
    Arc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSegment<T> {
    pub kind: SegmentKind,
    pub length: T,
    pub curvature: T,
}

impl<T: Scalar> TrackSegment<T> {
    pub fn straight(length: T) -> Self {
        Self { kind: SegmentKind::Straight, length, curvature: T::zero() }
    }

    pub fn arc(length: T, curvature: T) -> Self {
        Self { kind: SegmentKind::Arc, length, curvature }
    }

    /// Arc covering `turn` radians of heading change at the given signed curvature.
    pub fn arc_turn(turn: T, curvature: T) -> Self {
        Self::arc((turn / curvature).abs(), curvature)
    }

    fn validate(&self, index: usize) -> Result<(), GeometryError> {
        let bad = |reason: &str| GeometryError::InvalidSegment { index, reason: reason.to_string() };
        if !(self.length > T::zero()) || !self.length.is_finite() {
            return Err(bad("length must be positive and finite"));
        }
        if !self.curvature.is_finite() {
            return Err(bad("curvature must be finite"));
        }
        match self.kind {
            SegmentKind::Straight if self.curvature != T::zero() => {
                Err(bad("straight segment must have zero curvature"))
            }
            SegmentKind::Arc if self.curvature == T::zero() => Err(bad("arc segment must have nonzero curvature")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorldPose<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
}

impl<T: Scalar> WorldPose<T> {
    pub fn new(x: T, y: T, psi: T) -> Self {
        Self { x, y, psi: wrap_angle(psi) }
    }

    /// Pose shifted sideways by `offset` (positive to the left of the heading).
    pub fn offset_left(&self, offset: T) -> Self {
        Self { x: self.x - offset * self.psi.sin(), y: self.y + offset * self.psi.cos(), psi: self.psi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackPose<T> {
    pub s: T,
    pub d: T,
    pub theta: T,
}

/// Start-of-segment bookkeeping; `heading` is unwrapped.
#[derive(Debug, Clone, Copy)]
struct Knot<T> {
    s: T,
    x: T,
    y: T,
    heading: T,
}

#[derive(Debug, Clone)]
pub struct Track<T> {
    name: String,
    half_width: T,
    closed: bool,
    segments: Vec<TrackSegment<T>>,
    knots: Vec<Knot<T>>,
    length: T,
    total_turn: T,
}

/// Pose reached after travelling `u` along a segment with curvature `kappa`
/// from `(x, y, heading)`. Chord form, so it stays accurate for tiny curvature.
fn advance<T: Scalar>(x: T, y: T, heading: T, kappa: T, u: T) -> (T, T, T) {
    if kappa == T::zero() {
        return (x + u * heading.cos(), y + u * heading.sin(), heading);
    }
    let half = kappa * u / T::two();
    let chord = T::two() * half.sin() / kappa;
    let mid = heading + half;
    (x + chord * mid.cos(), y + chord * mid.sin(), heading + kappa * u)
}

impl<T: Scalar> Track<T> {
    pub fn new(
        name: impl Into<String>,
        half_width: T,
        closed: bool,
        segments: Vec<TrackSegment<T>>,
    ) -> Result<Self, GeometryError> {
        if segments.is_empty() {
            return Err(GeometryError::EmptyTrack);
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(GeometryError::InvalidHalfWidth(half_width.to_f64_lossy()));
        }
        for (i, seg) in segments.iter().enumerate() {
            seg.validate(i)?;
        }

        let mut knots = Vec::with_capacity(segments.len());
        let (mut x, mut y, mut heading, mut s) = (T::zero(), T::zero(), T::zero(), T::zero());
        for seg in &segments {
            knots.push(Knot { s, x, y, heading });
            (x, y, heading) = advance(x, y, heading, seg.curvature, seg.length);
            s += seg.length;
        }

        let track = Self {
            name: name.into(),
            half_width,
            closed,
            segments,
            knots,
            length: s,
            total_turn: heading,
        };
        if closed {
            let (gap, heading_gap) = track.closure_error(x, y, heading);
            let (pos_tol, head_tol) = track.closure_tolerance();
            if !(gap <= pos_tol && heading_gap <= head_tol) {
                return Err(GeometryError::NotClosed { gap: gap.to_f64_lossy(), heading_gap: heading_gap.to_f64_lossy() });
            }
        }
        Ok(track)
    }

    fn closure_error(&self, x: T, y: T, heading: T) -> (T, T) {
        (x.hypot(y), wrap_angle(heading).abs())
    }

    /// 1e-6 m and 1e-8 rad, relaxed in proportion to machine precision for
    /// scalar types coarser than `f64`.
    fn closure_tolerance(&self) -> (T, T) {
        let eps = T::epsilon();
        let turn: T = self.segments.iter().map(|s| (s.curvature * s.length).abs()).sum();
        let pos = T::lit(1e-6).max(T::lit(100.0) * eps * self.length);
        let head = T::lit(1e-8).max(T::lit(100.0) * eps * turn.max(T::one()));
        (pos, head)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segments(&self) -> &[TrackSegment<T>] {
        &self.segments
    }

    /// Total centerline arc length.
    pub fn length(&self) -> T {
        self.length
    }

    /// Arc length at which each segment begins.
    pub fn segment_starts(&self) -> impl Iterator<Item = T> + '_ {
        self.knots.iter().map(|k| k.s)
    }

    /// Maps `s` onto the track: modulo the length for closed tracks, unchanged otherwise.
    pub fn wrap_s(&self, s: T) -> T {
        if self.closed {
            let w = s % self.length;
            let w = if w < T::zero() { w + self.length } else { w };
            if w >= self.length {
                T::zero()
            } else {
                w
            }
        } else {
            s
        }
    }

    /// Index of the segment containing `s` (already wrapped). The segment
    /// beginning exactly at `s` wins at boundaries; open tracks extend their
    /// first and last segments beyond the ends.
    fn segment_index(&self, s: T) -> usize {
        self.knots.partition_point(|k| k.s <= s).saturating_sub(1)
    }

    fn locate(&self, s: T) -> (usize, T) {
        let s = self.wrap_s(s);
        let i = self.segment_index(s);
        (i, s - self.knots[i].s)
    }

    fn point_on(&self, index: usize, u: T) -> (T, T, T) {
        let k = &self.knots[index];
        advance(k.x, k.y, k.heading, self.segments[index].curvature, u)
    }

    /// World pose of the centerline at arc length `s`, heading along the tangent.
    pub fn centerline_pose(&self, s: T) -> WorldPose<T> {
        let (i, u) = self.locate(s);
        let (x, y, heading) = self.point_on(i, u);
        WorldPose::new(x, y, heading)
    }

    /// Unwrapped tangent heading; grows by the total turn per lap on closed tracks.
    pub fn heading_unwrapped(&self, s: T) -> T {
        let laps = if self.closed { (s / self.length).floor() } else { T::zero() };
        let (i, u) = self.locate(s);
        self.knots[i].heading + self.segments[i].curvature * u + laps * self.total_turn
    }

    pub fn curvature_at(&self, s: T) -> T {
        let (i, _) = self.locate(s);
        self.segments[i].curvature
    }

    /// Average signed curvature over `[s, s + window]`.
    pub fn mean_curvature(&self, s: T, window: T) -> T {
        (self.heading_unwrapped(s + window) - self.heading_unwrapped(s)) / window
    }

    /// Nearest centerline point to `pose`, expressed as `(s, d, theta)`.
    pub fn world_to_track(&self, pose: &WorldPose<T>) -> Result<TrackPose<T>, GeometryError> {
        let mut best: Option<(T, usize, T)> = None;
        for index in 0..self.segments.len() {
            let u = self.project_on_segment(index, pose.x, pose.y);
            let (qx, qy, _) = self.point_on(index, u);
            let dist2 = (pose.x - qx).powi(2) + (pose.y - qy).powi(2);
            if best.map_or(true, |(d2, _, _)| dist2 < d2) {
                best = Some((dist2, index, u));
            }
        }
        let (dist2, index, u) = best.ok_or(GeometryError::EmptyTrack)?;
        let bound = T::lit(10.0) * self.half_width;
        let distance = dist2.sqrt();
        if !(distance <= bound) {
            return Err(GeometryError::OutOfCorridor { distance: distance.to_f64_lossy(), bound: bound.to_f64_lossy() });
        }

        let (qx, qy, heading) = self.point_on(index, u);
        let d = -(pose.x - qx) * heading.sin() + (pose.y - qy) * heading.cos();
        Ok(TrackPose {
            s: self.wrap_s(self.knots[index].s + u),
            d,
            theta: wrap_angle(pose.psi - heading),
        })
    }

    /// Local parameter of the closest point on one segment, clamped to the segment.
    fn project_on_segment(&self, index: usize, px: T, py: T) -> T {
        let seg = &self.segments[index];
        let k = &self.knots[index];
        let (dx, dy) = (px - k.x, py - k.y);
        let kappa = seg.curvature;
        if kappa == T::zero() {
            let u = dx * k.heading.cos() + dy * k.heading.sin();
            return u.max(T::zero()).min(seg.length);
        }

        // Circle centre sits a radius to the left (kappa > 0) or right of the start.
        let cx = k.x - k.heading.sin() / kappa;
        let cy = k.y + k.heading.cos() / kappa;
        let (rx, ry) = (px - cx, py - cy);
        if rx.hypot(ry) <= T::epsilon() {
            return T::zero();
        }
        let half_pi = T::FRAC_PI_2();
        let two_pi = T::PI() + T::PI();
        let phi = ry.atan2(rx);
        let foot_heading = if kappa > T::zero() { phi + half_pi } else { phi - half_pi };
        let mut swept = if kappa > T::zero() { foot_heading - k.heading } else { k.heading - foot_heading };
        swept = swept % two_pi;
        if swept < T::zero() {
            swept += two_pi;
        }
        let u = swept / kappa.abs();
        if u <= seg.length {
            return u;
        }
        let dist2_at = |u: T| {
            let (qx, qy, _) = advance(k.x, k.y, k.heading, kappa, u);
            (px - qx).powi(2) + (py - qy).powi(2)
        };
        if dist2_at(seg.length) < dist2_at(T::zero()) {
            seg.length
        } else {
            T::zero()
        }
    }

    /// Same geometry mirrored across the start heading (all curvatures negated).
    pub fn mirrored(&self) -> Self {
        let segments = self.segments.iter().map(|s| TrackSegment { curvature: -s.curvature, ..*s }).collect();
        Self::new(format!("{}-mirrored", self.name), self.half_width, self.closed, segments)
            .expect("mirroring preserves validity")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadingClass {
    Left,
    Straight,
    Right,
}

impl HeadingClass {
    pub const ALL: [HeadingClass; 3] = [HeadingClass::Left, HeadingClass::Straight, HeadingClass::Right];

    pub fn index(self) -> usize {
        match self {
            HeadingClass::Left => 0,
            HeadingClass::Straight => 1,
            HeadingClass::Right => 2,
        }
    }

    pub fn one_hot<T: Scalar>(self) -> [T; 3] {
        let mut v = [T::zero(); 3];
        v[self.index()] = T::one();
        v
    }
}

/// Discrete track-heading feature: sign of the mean curvature ahead, with a dead band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingClassifier<T> {
    pub lookahead: T,
    pub threshold: T,
}

impl<T: Scalar> Default for HeadingClassifier<T> {
    fn default() -> Self {
        Self { lookahead: T::lit(30.0), threshold: T::lit(0.005) }
    }
}

impl<T: Scalar> HeadingClassifier<T> {
    pub fn classify(&self, track: &Track<T>, s: T) -> HeadingClass {
        heading_class(track, s, self.lookahead, self.threshold)
    }
}

pub fn heading_class<T: Scalar>(track: &Track<T>, s: T, lookahead: T, threshold: T) -> HeadingClass {
    let mean = track.mean_curvature(s, lookahead);
    if mean > threshold {
        HeadingClass::Left
    } else if mean < -threshold {
        HeadingClass::Right
    } else {
        HeadingClass::Straight
    }
}

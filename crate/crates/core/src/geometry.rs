//! Planar points and disc regions.

use std::ops::{Add, AddAssign, Div, Mul, Sub};

/// A point or vector in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn normalized(self) -> Point {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            Point::ORIGIN
        }
    }

    /// Rescales the vector so its length is at most `max_len`.
    pub fn clamp_length(self, max_len: f64) -> Point {
        let n = self.norm();
        if n > max_len {
            self * (max_len / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, rhs: Point) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Div<f64> for Point {
    type Output = Point;
    fn div(self, k: f64) -> Point {
        Point::new(self.x / k, self.y / k)
    }
}

/// Closed disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: Point,
    pub radius: f64,
}

impl Disc {
    pub const fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.distance(self.center) <= self.radius
    }

    /// Mirrors a point lying outside the disc back inside across the
    /// boundary circle along the radial direction.
    pub fn reflect(&self, p: Point) -> Point {
        let offset = p - self.center;
        let r = offset.norm();
        if r <= self.radius {
            return p;
        }
        // Radial mirror; a step longer than the diameter would land outside
        // again, so clamp to the far boundary.
        let reflected = (2.0 * self.radius - r).max(-self.radius);
        self.center + offset * (reflected / r)
    }
}

/// Centroid of a non-empty point set.
pub fn centroid(points: impl IntoIterator<Item = Point>) -> Option<Point> {
    let mut sum = Point::ORIGIN;
    let mut n = 0usize;
    for p in points {
        sum += p;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

//! Bounded star-shaped planar domains.
//!
//! A domain is a disk, an axis-aligned rectangle or a convex polygon together
//! with a reference point `x0`. From these we derive the support distance
//! `rho0 = min_{boundary} (x - x0) . nu`, the radius `d = max |x - x0|` and the
//! shape constants `m1 = 3 / (2 rho0)`, `m2 = 1 + d / rho0`.
//!
//! Closed forms are used for every supported shape; the boundary samples are a
//! composite midpoint rule on arc length and serve for boundary quadrature and
//! as a sampled cross-check of the closed forms.

use std::f64::consts::PI;

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("reference point ({0}, {1}) is not interior to the domain")]
    NotInterior(f64, f64),
    #[error("degenerate shape: {0}")]
    Degenerate(String),
    #[error("polygon is not strictly convex and counter-clockwise at vertex {0}")]
    NotConvex(usize),
    #[error("reference point is not a star center for the sampled boundary (rho0 = {0})")]
    NotStarCenter(f64),
    #[error("boundary resolution must be at least {min}, got {got}")]
    Resolution { min: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disk { center: Point, radius: f64 },
    /// Axis-aligned rectangle `center +- half_widths`.
    Rectangle { center: Point, half_widths: [f64; 2] },
    /// Convex polygon, vertices in counter-clockwise order.
    Polygon { vertices: Vec<Point> },
}

impl Shape {
    pub fn disk(radius: f64) -> Self {
        Shape::Disk { center: [0.0, 0.0], radius }
    }

    pub fn rectangle(a: f64, b: f64) -> Self {
        Shape::Rectangle { center: [0.0, 0.0], half_widths: [a, b] }
    }

    /// Regular `n`-gon with vertices at distance `circumradius` from `center`.
    pub fn regular_polygon(center: Point, circumradius: f64, n: usize) -> Self {
        let vertices = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                [center[0] + circumradius * th.cos(), center[1] + circumradius * th.sin()]
            })
            .collect();
        Shape::Polygon { vertices }
    }

    fn corners(center: Point, hw: [f64; 2]) -> Vec<Point> {
        vec![
            [center[0] - hw[0], center[1] - hw[1]],
            [center[0] + hw[0], center[1] - hw[1]],
            [center[0] + hw[0], center[1] + hw[1]],
            [center[0] - hw[0], center[1] + hw[1]],
        ]
    }

    fn validate(&self) -> Result<(), GeometryError> {
        match self {
            Shape::Disk { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || !finite_point(center) {
                    return Err(GeometryError::Degenerate(format!("disk radius {radius}")));
                }
            }
            Shape::Rectangle { center, half_widths } => {
                if !half_widths.iter().all(|h| h.is_finite() && *h > 0.0) || !finite_point(center) {
                    return Err(GeometryError::Degenerate(format!(
                        "rectangle half-widths {half_widths:?}"
                    )));
                }
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 || !vertices.iter().all(finite_point) {
                    return Err(GeometryError::Degenerate(format!("polygon with {n} vertices")));
                }
                for i in 0..n {
                    let e = sub(vertices[(i + 1) % n], vertices[i]);
                    if norm(e) == 0.0 {
                        return Err(GeometryError::Degenerate(format!("zero-length edge at vertex {i}")));
                    }
                }
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = vertices[(i + 2) % n];
                    if cross(sub(b, a), sub(c, b)) <= 0.0 {
                        return Err(GeometryError::NotConvex((i + 1) % n));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub point: Point,
    /// Outward unit normal.
    pub normal: Point,
    /// Arc-length weight.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConstants {
    pub rho0: f64,
    pub d: f64,
    pub m1: f64,
    pub m2: f64,
    pub area: f64,
    pub perimeter: f64,
}

impl GeometryConstants {
    fn from_parts(rho0: f64, d: f64, area: f64, perimeter: f64) -> Self {
        GeometryConstants {
            rho0,
            d,
            m1: 3.0 / (2.0 * rho0),
            m2: 1.0 + d / rho0,
            area,
            perimeter,
        }
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "rho0={}\nd={}\nm1={}\nm2={}\narea={}\nperimeter={}\n",
            self.rho0, self.d, self.m1, self.m2, self.area, self.perimeter
        )
    }
}

/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGeometry {
    shape: Shape,
    x0: Point,
    boundary_samples: Vec<BoundarySample>,
}

impl DomainGeometry {
    pub fn new(shape: Shape, x0: Point, boundary_resolution: usize) -> Result<Self, GeometryError> {
        shape.validate()?;
        let min = match &shape {
            Shape::Disk { .. } => 3,
            Shape::Rectangle { .. } => 4,
            Shape::Polygon { vertices } => vertices.len(),
        };
        if boundary_resolution < min {
            return Err(GeometryError::Resolution { min, got: boundary_resolution });
        }
        if !finite_point(&x0) || !strictly_inside(&shape, x0) {
            return Err(GeometryError::NotInterior(x0[0], x0[1]));
        }
        let boundary_samples = sample_boundary(&shape, boundary_resolution);
        Ok(DomainGeometry { shape, x0, boundary_samples })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn x0(&self) -> Point {
        self.x0
    }

    pub fn boundary_samples(&self) -> &[BoundarySample] {
        &self.boundary_samples
    }

    pub fn area(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => PI * radius * radius,
            Shape::Rectangle { half_widths, .. } => 4.0 * half_widths[0] * half_widths[1],
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                0.5 * (0..n)
                    .map(|i| cross(vertices[i], vertices[(i + 1) % n]))
                    .sum::<f64>()
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match &self.shape {
            Shape::Disk { radius, .. } => 2.0 * PI * radius,
            Shape::Rectangle { half_widths, .. } => 4.0 * (half_widths[0] + half_widths[1]),
            Shape::Polygon { vertices } => edges(vertices).map(|(a, b)| norm(sub(b, a))).sum(),
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, p: Point) -> bool {
        match &self.shape {
            Shape::Disk { center, radius } => norm(sub(p, *center)) <= *radius,
            Shape::Rectangle { center, half_widths } => {
                (p[0] - center[0]).abs() <= half_widths[0] && (p[1] - center[1]).abs() <= half_widths[1]
            }
            Shape::Polygon { vertices } => edges(vertices).all(|(a, b)| cross(sub(b, a), sub(p, a)) >= 0.0),
        }
    }

    /// Lower-left and upper-right corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Shape::Rectangle { center, half_widths } => (
                [center[0] - half_widths[0], center[1] - half_widths[1]],
                [center[0] + half_widths[0], center[1] + half_widths[1]],
            ),
            Shape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Closed-form `rho0`, `d`, `m1`, `m2`.
    pub fn constants(&self) -> Result<GeometryConstants, GeometryError> {
        let x0 = self.x0;
        let (rho0, d) = match &self.shape {
            Shape::Disk { center, radius } => {
                let off = norm(sub(x0, *center));
                (radius - off, radius + off)
            }
            Shape::Rectangle { center, half_widths } => {
                let dx = (x0[0] - center[0]).abs();
                let dy = (x0[1] - center[1]).abs();
                let rho0 = (half_widths[0] - dx).min(half_widths[1] - dy);
                let d = (half_widths[0] + dx).hypot(half_widths[1] + dy);
                (rho0, d)
            }
            Shape::Polygon { vertices } => {
                let rho0 = edges(vertices)
                    .map(|(a, b)| dot(sub(a, x0), edge_normal(a, b)))
                    .fold(f64::INFINITY, f64::min);
                let d = vertices.iter().map(|v| norm(sub(*v, x0))).fold(0.0, f64::max);
                (rho0, d)
            }
        };
        if !(rho0 > 0.0) {
            return Err(GeometryError::NotStarCenter(rho0));
        }
        Ok(GeometryConstants::from_parts(rho0, d, self.area(), self.perimeter()))
    }

    /// `(rho0, d)` estimated from the boundary samples only.
    pub fn sampled_rho0_d(&self) -> (f64, f64) {
        let x0 = self.x0;
        let mut rho0 = f64::INFINITY;
        let mut d: f64 = 0.0;
        for s in &self.boundary_samples {
            let r = sub(s.point, x0);
            rho0 = rho0.min(dot(r, s.normal));
            d = d.max(norm(r));
        }
        if let Shape::Polygon { vertices } = &self.shape {
            d = vertices.iter().map(|v| norm(sub(*v, x0))).fold(d, f64::max);
        }
        if let Shape::Rectangle { center, half_widths } = &self.shape {
            d = Shape::corners(*center, *half_widths)
                .iter()
                .map(|v| norm(sub(*v, x0)))
                .fold(d, f64::max);
        }
        (rho0, d)
    }

    pub fn translated(&self, by: Point) -> Result<Self, GeometryError> {
        let shift = |p: Point| [p[0] + by[0], p[1] + by[1]];
        let shape = match &self.shape {
            Shape::Disk { center, radius } => Shape::Disk { center: shift(*center), radius: *radius },
            Shape::Rectangle { center, half_widths } => {
                Shape::Rectangle { center: shift(*center), half_widths: *half_widths }
            }
            Shape::Polygon { vertices } => Shape::Polygon { vertices: vertices.iter().copied().map(shift).collect() },
        };
        DomainGeometry::new(shape, shift(self.x0), self.boundary_samples.len())
    }

    /// Scaling about the origin.
    pub fn scaled(&self, s: f64) -> Result<Self, GeometryError> {
        let sc = |p: Point| [p[0] * s, p[1] * s];
        let shape = match &self.shape {
            Shape::Disk { center, radius } => Shape::Disk { center: sc(*center), radius: radius * s },
            Shape::Rectangle { center, half_widths } => Shape::Rectangle {
                center: sc(*center),
                half_widths: [half_widths[0] * s, half_widths[1] * s],
            },
            Shape::Polygon { vertices } => Shape::Polygon { vertices: vertices.iter().copied().map(sc).collect() },
        };
        DomainGeometry::new(shape, sc(self.x0), self.boundary_samples.len())
    }
}

fn strictly_inside(shape: &Shape, p: Point) -> bool {
    match shape {
        Shape::Disk { center, radius } => norm(sub(p, *center)) < *radius,
        Shape::Rectangle { center, half_widths } => {
            (p[0] - center[0]).abs() < half_widths[0] && (p[1] - center[1]).abs() < half_widths[1]
        }
        Shape::Polygon { vertices } => edges(vertices).all(|(a, b)| cross(sub(b, a), sub(p, a)) > 0.0),
    }
}

fn sample_boundary(shape: &Shape, resolution: usize) -> Vec<BoundarySample> {
    match shape {
        Shape::Disk { center, radius } => {
            let w = 2.0 * PI * radius / resolution as f64;
            (0..resolution)
                .map(|k| {
                    let th = 2.0 * PI * (k as f64 + 0.5) / resolution as f64;
                    let normal = [th.cos(), th.sin()];
                    BoundarySample {
                        point: [center[0] + radius * normal[0], center[1] + radius * normal[1]],
                        normal,
                        weight: w,
                    }
                })
                .collect()
        }
        Shape::Rectangle { center, half_widths } => sample_polygon(&Shape::corners(*center, *half_widths), resolution),
        Shape::Polygon { vertices } => sample_polygon(vertices, resolution),
    }
}

/// Samples are spread over the edges in proportion to their length, at least one per edge.
fn sample_polygon(vertices: &[Point], resolution: usize) -> Vec<BoundarySample> {
    let perimeter: f64 = edges(vertices).map(|(a, b)| norm(sub(b, a))).sum();
    let mut out = Vec::with_capacity(resolution + vertices.len());
    for (a, b) in edges(vertices) {
        let len = norm(sub(b, a));
        let n = ((resolution as f64 * len / perimeter).round() as usize).max(1);
        let normal = edge_normal(a, b);
        let w = len / n as f64;
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            out.push(BoundarySample {
                point: [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
                normal,
                weight: w,
            });
        }
    }
    out
}

fn edges(vertices: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    let n = vertices.len();
    (0..n).map(move |i| (vertices[i], vertices[(i + 1) % n]))
}

/// Outward normal of a counter-clockwise edge.
fn edge_normal(a: Point, b: Point) -> Point {
    let e = sub(b, a);
    let l = norm(e);
    [e[1] / l, -e[0] / l]
}

fn finite_point(p: &Point) -> bool {
    p[0].is_finite() && p[1].is_finite()
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn unit_disk_centered() {
        let g = DomainGeometry::new(Shape::disk(1.0), [0.0, 0.0], 256).unwrap();
        let c = g.constants().unwrap();
        assert_eq!((c.rho0, c.d, c.m1, c.m2), (1.0, 1.0, 1.5, 2.0));
        let p: f64 = g.boundary_samples().iter().map(|s| s.weight).sum();
        assert!(close(p, 2.0 * PI, 1e-6));
        for s in g.boundary_samples() {
            assert!(close(s.normal[0].hypot(s.normal[1]), 1.0, 1e-15));
        }
    }

    #[test]
    fn rectangle_constants_and_perimeter() {
        let g = DomainGeometry::new(Shape::rectangle(2.0, 1.0), [0.0, 0.0], 120).unwrap();
        let c = g.constants().unwrap();
        assert_eq!(c.perimeter, 12.0);
        let sampled: f64 = g.boundary_samples().iter().map(|s| s.weight).sum();
        assert!(close(sampled, 12.0, 1e-12));
        assert_eq!(c.rho0, 1.0);
        assert!(close(c.d, 5f64.sqrt(), 1e-15));
        assert_eq!(c.m1, 1.5);
        assert!(close(c.m2, 1.0 + 5f64.sqrt(), 1e-15));
    }

    #[test]
    fn off_center_disk() {
        let g = DomainGeometry::new(Shape::disk(1.0), [0.5, 0.0], 4096).unwrap();
        let c = g.constants().unwrap();
        assert!(close(c.rho0, 0.5, 1e-15) && close(c.d, 1.5, 1e-15));
        assert!(close(c.m1, 3.0, 1e-14) && close(c.m2, 4.0, 1e-14));
        // dense sampling of 1 - 0.5 cos(theta) and |x - x0|
        let (r, d) = g.sampled_rho0_d();
        assert!(close(r, 0.5, 1e-6) && close(d, 1.5, 1e-6));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            DomainGeometry::new(Shape::disk(1.0), [1.5, 0.0], 64),
            Err(GeometryError::NotInterior(1.5, 0.0))
        );
        assert!(matches!(
            DomainGeometry::new(Shape::disk(0.0), [0.0, 0.0], 64),
            Err(GeometryError::Degenerate(_))
        ));
        let clockwise = Shape::Polygon { vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]] };
        assert!(matches!(
            DomainGeometry::new(clockwise, [0.5, 0.5], 64),
            Err(GeometryError::NotConvex(_))
        ));
        let dart = Shape::Polygon { vertices: vec![[0.0, 0.0], [2.0, 1.0], [0.0, 2.0], [1.0, 1.0]] };
        assert!(matches!(DomainGeometry::new(dart, [0.5, 1.0], 64), Err(GeometryError::NotConvex(_))));
        // boundary point is not interior
        assert!(DomainGeometry::new(Shape::rectangle(1.0, 1.0), [1.0, 0.0], 64).is_err());
    }

    #[test]
    fn polygon_matches_rectangle() {
        let poly = Shape::Polygon { vertices: vec![[-2.0, -1.0], [2.0, -1.0], [2.0, 1.0], [-2.0, 1.0]] };
        let a = DomainGeometry::new(poly, [0.3, -0.2], 64).unwrap().constants().unwrap();
        let b = DomainGeometry::new(Shape::rectangle(2.0, 1.0), [0.3, -0.2], 64)
            .unwrap()
            .constants()
            .unwrap();
        assert!(close(a.rho0, b.rho0, 1e-14) && close(a.d, b.d, 1e-14) && close(a.area, b.area, 1e-14));
    }
}

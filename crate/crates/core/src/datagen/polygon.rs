//! Random simple polygons by angular sweep around the cell centre.
//!
//! Vertices are placed at strictly increasing angles around `(0.5, 0.5)`, so
//! the result is star-shaped with respect to the centre and therefore never
//! self-intersecting.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::NormalSampler;

pub type Point = [f64; 2];

pub const CENTER: Point = [0.5, 0.5];
pub const DEFAULT_RADIUS: f64 = 0.3;
const MIN_RADIUS: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolygonParams {
    pub vertex_count: usize,
    /// Jitter of the angular steps, as a fraction of the mean step.
    pub irregularity: f64,
    /// Spread of the vertex radii, as a fraction of `radius`.
    pub spikiness: f64,
    /// Mean distance from the centre.
    pub radius: f64,
}

impl PolygonParams {
    fn clamped(self) -> Self {
        let out = PolygonParams {
            vertex_count: self.vertex_count.clamp(3, 16),
            irregularity: clamp01(self.irregularity),
            spikiness: clamp01(self.spikiness),
            radius: if self.radius.is_finite() { self.radius.clamp(MIN_RADIUS, 0.75) } else { DEFAULT_RADIUS },
        };
        if out != self {
            log::warn!("polygon parameters {self:?} clamped to {out:?}");
        }
        out
    }
}

fn clamp01(v: f64) -> f64 {
    if v.is_finite() {
        v.clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Polygon of the default mean radius, deterministic per seed.
pub fn random_polygon(seed: u64, vertex_count: usize, irregularity: f64, spikiness: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    polygon_from_rng(
        &mut rng,
        PolygonParams { vertex_count, irregularity, spikiness, radius: DEFAULT_RADIUS },
    )
}

pub fn polygon_from_rng(rng: &mut ChaCha8Rng, params: PolygonParams) -> Vec<Point> {
    let p = params.clamped();
    let n = p.vertex_count;
    let mean_step = TAU / n as f64;
    let jitter = p.irregularity * mean_step;
    let mut steps: Vec<f64> = (0..n)
        .map(|_| if jitter > 0.0 { rng.gen_range(mean_step - jitter..=mean_step + jitter) } else { mean_step })
        .collect();
    let total: f64 = steps.iter().sum();
    steps.iter_mut().for_each(|s| *s *= TAU / total);

    let mut angle = rng.gen_range(0.0..TAU);
    let mut normal = NormalSampler::from_rng(ChaCha8Rng::seed_from_u64(rng.gen()));
    let spread = p.spikiness * p.radius;
    let mut points = Vec::with_capacity(n);
    for step in steps {
        let r = normal.sample(p.radius, spread).clamp(MIN_RADIUS, 2.0 * p.radius);
        let (s, c) = angle.sin_cos();
        let r = r.min(distance_to_edge(c, s));
        points.push([CENTER[0] + r * c, CENTER[1] + r * s]);
        angle += step;
    }
    points
}

/// Distance from the centre to the unit square's boundary along `(dx, dy)`.
fn distance_to_edge(dx: f64, dy: f64) -> f64 {
    let tx = if dx.abs() > 1e-12 { 0.5 / dx.abs() } else { f64::INFINITY };
    let ty = if dy.abs() > 1e-12 { 0.5 / dy.abs() } else { f64::INFINITY };
    tx.min(ty)
}

/// Shoelace area (positive for counterclockwise order).
pub fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_square_when_no_jitter() {
        let p = random_polygon(11, 4, 0.0, 0.0);
        assert_eq!(p.len(), 4);
        for i in 0..4 {
            let (a, b) = (p[i], p[(i + 1) % 4]);
            let side = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((side - DEFAULT_RADIUS * 2f64.sqrt()).abs() < 1e-12);
            let r = ((a[0] - 0.5).powi(2) + (a[1] - 0.5).powi(2)).sqrt();
            assert!((r - DEFAULT_RADIUS).abs() < 1e-12);
        }
        assert!((signed_area(&p) - 2.0 * DEFAULT_RADIUS * DEFAULT_RADIUS).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_inside_unit_square() {
        assert_eq!(random_polygon(5, 9, 0.5, 0.4), random_polygon(5, 9, 0.5, 0.4));
        assert_ne!(random_polygon(5, 9, 0.5, 0.4), random_polygon(6, 9, 0.5, 0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = polygon_from_rng(&mut rng, PolygonParams { vertex_count: 12, irregularity: 0.8, spikiness: 1.0, radius: 0.7 });
            assert!(p.iter().all(|q| (0.0..=1.0).contains(&q[0]) && (0.0..=1.0).contains(&q[1])));
        }
    }

    #[test]
    fn out_of_range_parameters_are_clamped() {
        let p = random_polygon(1, 40, 3.0, -1.0);
        assert_eq!(p.len(), 16);
    }
}

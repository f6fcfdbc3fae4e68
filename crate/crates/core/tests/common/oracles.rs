//! Independent reference implementations, written for clarity rather than
//! speed and sharing no code with the library.

use metafilter_core::datagen::Point;
use metafilter_core::metrics::SsimConfig;

/// Line-by-line band contrast for one 29-sample half, 1-based as written.
pub fn contrast_reference(t: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), 29);
    let theta: Vec<usize> = (1..=29).collect();
    let mut c = Vec::with_capacity(7);
    for i in 1..=7usize {
        let omega: Vec<usize> = (4 * i - 3..=4 * i + 1).collect();
        let mut max_in = f64::MIN;
        for &k in &omega {
            max_in = max_in.max(t[k - 1]);
        }
        let mut max_out = f64::MIN;
        for &l in theta.iter().filter(|l| !omega.contains(l)) {
            max_out = max_out.max(t[l - 1]);
        }
        c.push(max_in / max_out);
    }
    c
}

/// Mean of local SSIM over every window placement, each window's moments
/// computed from scratch.
pub fn ssim_direct(a: &[f64], b: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let k = cfg.window;
    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let px = |img: &[f64], r: usize, c: usize| img[(i + r) * w + j + c];
            let (mut mx, mut my) = (0.0, 0.0);
            for r in 0..k {
                for c in 0..k {
                    mx += px(a, r, c);
                    my += px(b, r, c);
                }
            }
            mx /= n;
            my /= n;
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for r in 0..k {
                for c in 0..k {
                    let dx = px(a, r, c) - mx;
                    let dy = px(b, r, c) - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            vx /= n;
            vy /= n;
            cov /= n;
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

pub fn segments_intersect(p1: Point, p2: Point, p3: Point, p4: Point) -> bool {
    let d1 = orient(p3, p4, p1);
    let d2 = orient(p3, p4, p2);
    let d3 = orient(p1, p2, p3);
    let d4 = orient(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p4, p1))
        || (d2 == 0.0 && on_segment(p3, p4, p2))
        || (d3 == 0.0 && on_segment(p1, p2, p3))
        || (d4 == 0.0 && on_segment(p1, p2, p4))
}

/// No two non-adjacent edges touch.
pub fn is_simple(poly: &[Point]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Even-odd test by casting a ray in +x.
pub fn point_in_polygon(poly: &[Point], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > y) != (b[1] > y) {
            let cross = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if cross > x {
                inside = !inside;
            }
        }
    }
    inside
}

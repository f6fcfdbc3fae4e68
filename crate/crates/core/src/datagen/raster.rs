use crate::datagen::polygon::{signed_area, Point};
use crate::datagen::{ShapeImage, IMAGE_PIXELS, IMAGE_SIDE};

/// Even-odd fill: a pixel is set when its centre lies inside `poly`.
///
/// Rows are filled by scanline; the crossing rule is the half-open
/// `(yi > y) != (yj > y)` test so that shared vertices count once.
pub fn rasterize(poly: &[Point]) -> ShapeImage {
    if poly.len() < 3 || signed_area(poly).abs() < 1e-12 {
        return ShapeImage::zeros();
    }
    let n = poly.len();
    let mut pixels = vec![0.0f32; IMAGE_PIXELS];
    let mut xs = Vec::with_capacity(n);
    for row in 0..IMAGE_SIDE {
        let y = (row as f64 + 0.5) / IMAGE_SIDE as f64;
        xs.clear();
        let mut j = n - 1;
        for i in 0..n {
            let (pi, pj) = (poly[i], poly[j]);
            if (pi[1] > y) != (pj[1] > y) {
                xs.push((pj[0] - pi[0]) * (y - pi[1]) / (pj[1] - pi[1]) + pi[0]);
            }
            j = i;
        }
        xs.sort_by(f64::total_cmp);
        for col in 0..IMAGE_SIDE {
            let x = (col as f64 + 0.5) / IMAGE_SIDE as f64;
            // crossings strictly to the right of the centre
            let right = xs.len() - xs.partition_point(|&xi| xi <= x);
            if right % 2 == 1 {
                pixels[row * IMAGE_SIDE + col] = 1.0;
            }
        }
    }
    ShapeImage::new(pixels).expect("binary pixels")
}

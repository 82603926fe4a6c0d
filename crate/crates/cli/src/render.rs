//! Pictures of generation balls and cones inside the reference ball.

use image::{Rgb, RgbImage};
use selfsim_core::distance::Cone;
use selfsim_core::ifs::generation_balls;
use selfsim_core::{IfsError, IfsSystem, Point};

const SUPERSAMPLE: u32 = 2;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const OUTLINE: Rgb<u8> = Rgb([0, 0, 0]);
const CONE: Rgb<u8> = Rgb([250, 200, 190]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([40, 90, 170]),
    Rgb([230, 140, 30]),
    Rgb([50, 150, 80]),
    Rgb([170, 50, 60]),
    Rgb([120, 80, 160]),
    Rgb([90, 90, 90]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    pub width: u32,
    pub height: u32,
    pub generations: Vec<usize>,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: RgbImage,
    pub disks: usize,
}

impl RenderSpec {
    /// Pixels per unit length.
    pub fn scale(&self) -> f64 {
        0.9 * self.width.min(self.height) as f64
    }

    /// Image coordinates of a plane point (y grows downwards).
    pub fn to_pixel(&self, p: Point) -> (f64, f64) {
        let s = self.scale();
        (
            0.5 * self.width as f64 + s * p.x,
            0.5 * self.height as f64 - s * p.y,
        )
    }
}

pub fn color_of(generation: usize) -> Rgb<u8> {
    PALETTE[(generation.max(1) - 1) % PALETTE.len()]
}

pub fn render(sys: &IfsSystem, spec: &RenderSpec, budget: usize) -> Result<Rendered, IfsError> {
    let (w, h) = (spec.width * SUPERSAMPLE, spec.height * SUPERSAMPLE);
    let k = SUPERSAMPLE as f64;
    let s = spec.scale() * k;
    let (cx, cy) = (0.5 * w as f64, 0.5 * h as f64);
    let to_plane =
        |i: u32, j: u32| Point::new((i as f64 + 0.5 - cx) / s, (cy - (j as f64 + 0.5)) / s);
    let mut canvas = RgbImage::from_pixel(w, h, BACKGROUND);

    if !spec.cones.is_empty() {
        for (i, j, px) in canvas.enumerate_pixels_mut() {
            let y = to_plane(i, j);
            if spec.cones.iter().any(|c| c.contains(y)) {
                *px = CONE;
            }
        }
    }

    let mut generations = spec.generations.clone();
    generations.sort_unstable();
    generations.dedup();
    let mut disks = 0;
    for &g in &generations {
        let color = color_of(g);
        for ball in generation_balls(sys, g, budget)? {
            disks += 1;
            let r = 0.5 * ball.diameter * s;
            let bx = cx + ball.center.x * s;
            let by = cy - ball.center.y * s;
            let i0 = (bx - r - 1.0).floor().max(0.0) as u32;
            let i1 = ((bx + r + 1.0).ceil().max(0.0) as u32).min(w);
            let j0 = (by - r - 1.0).floor().max(0.0) as u32;
            let j1 = ((by + r + 1.0).ceil().max(0.0) as u32).min(h);
            for j in j0..j1 {
                for i in i0..i1 {
                    let dx = i as f64 + 0.5 - bx;
                    let dy = j as f64 + 0.5 - by;
                    if dx * dx + dy * dy <= r * r {
                        canvas.put_pixel(i, j, color);
                    }
                }
            }
        }
    }

    let radius = 0.5 * s;
    for (i, j, px) in canvas.enumerate_pixels_mut() {
        let dx = i as f64 + 0.5 - cx;
        let dy = j as f64 + 0.5 - cy;
        if ((dx * dx + dy * dy).sqrt() - radius).abs() <= k {
            *px = OUTLINE;
        }
    }

    Ok(Rendered {
        image: downsample(&canvas),
        disks,
    })
}

fn downsample(src: &RgbImage) -> RgbImage {
    let k = SUPERSAMPLE;
    RgbImage::from_fn(src.width() / k, src.height() / k, |i, j| {
        let mut acc = [0u32; 3];
        for dj in 0..k {
            for di in 0..k {
                let p = src.get_pixel(i * k + di, j * k + dj);
                for c in 0..3 {
                    acc[c] += p[c] as u32;
                }
            }
        }
        let n = k * k;
        Rgb(acc.map(|a| ((a + n / 2) / n) as u8))
    })
}

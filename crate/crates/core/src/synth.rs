//! Synthetic binary-mask sequences: rectangles, discs and L-shapes drifting
//! slowly across frames.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mask::GridMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Circle,
    LShape,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Rectangle, ShapeKind::Circle, ShapeKind::LShape];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Rectangle => "rect",
            ShapeKind::Circle => "circle",
            ShapeKind::LShape => "lshape",
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" | "rectangle" => Ok(ShapeKind::Rectangle),
            "circle" | "disc" => Ok(ShapeKind::Circle),
            "lshape" | "l" => Ok(ShapeKind::LShape),
            _ => Err(Error::Parse(format!("unknown shape '{s}'"))),
        }
    }
}

/// One object, in continuous grid units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    /// Half extents; circles use `rx` as the radius.
    pub rx: f64,
    pub ry: f64,
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        match self.kind {
            ShapeKind::Rectangle => dx.abs() <= self.rx && dy.abs() <= self.ry,
            ShapeKind::Circle => dx * dx + dy * dy <= self.rx * self.rx,
            ShapeKind::LShape => {
                let inside = dx.abs() <= self.rx && dy.abs() <= self.ry;
                // upper-right quadrant removed
                inside && !(dx > 0.0 && dy < 0.0)
            }
        }
    }

    pub fn draw(&self, mask: &mut GridMask) {
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if self.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    mask.set(x, y, true);
                }
            }
        }
    }

    /// The shape `t` frames later under a constant drift and slow breathing.
    pub fn at_frame(&self, t: usize, motion: (f64, f64), growth: f64) -> Shape {
        let t = t as f64;
        let scale = 1.0 + growth * (0.7 * t).sin();
        Shape {
            cx: self.cx + motion.0 * t,
            cy: self.cy + motion.1 * t,
            rx: self.rx * scale,
            ry: self.ry * scale,
            ..*self
        }
    }
}

pub fn render(shapes: &[Shape], width: usize, height: usize) -> Result<GridMask> {
    let mut mask = GridMask::new(width, height)?;
    for s in shapes {
        s.draw(&mut mask);
    }
    Ok(mask)
}

/// A random object that fits well inside a `width × height` grid.
pub fn random_shape<R: Rng + ?Sized>(kind: ShapeKind, width: usize, height: usize, rng: &mut R) -> Shape {
    let (w, h) = (width as f64, height as f64);
    let short = w.min(h);
    let rx = rng.random_range(0.15..0.3) * short;
    let ry = match kind {
        ShapeKind::Circle => rx,
        _ => rng.random_range(0.15..0.3) * short,
    };
    let margin = rx.max(ry) + 0.1 * short;
    Shape {
        kind,
        cx: rng.random_range(margin..(w - margin).max(margin + 1.0)),
        cy: rng.random_range(margin..(h - margin).max(margin + 1.0)),
        rx,
        ry,
    }
}

/// `frames` masks of one shape drifting by at most a pixel per frame.
pub fn sequence<R: Rng + ?Sized>(kind: ShapeKind, width: usize, height: usize, frames: usize, rng: &mut R) -> Result<Vec<GridMask>> {
    if width < 16 || height < 16 {
        return Err(Error::InvalidArgument(format!("grid {width}x{height} is too small for synthetic shapes")));
    }
    let shape = random_shape(kind, width, height, rng);
    let motion = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let growth = rng.random_range(0.0..0.05);
    (0..frames).map(|t| render(&[shape.at_frame(t, motion, growth)], width, height)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::trace_contours;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rectangle_area_and_contour() {
        let s = Shape { kind: ShapeKind::Rectangle, cx: 10.0, cy: 10.0, rx: 4.0, ry: 3.0 };
        let m = render(&[s], 20, 20).unwrap();
        assert_eq!(m.count(), 8 * 6);
        let c = trace_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].edge_count(), 2 * (8 + 6));
    }

    #[test]
    fn lshape_is_one_region_with_six_corners() {
        let s = Shape { kind: ShapeKind::LShape, cx: 16.0, cy: 16.0, rx: 8.0, ry: 8.0 };
        let m = render(&[s], 32, 32).unwrap();
        let c = trace_contours(&m);
        assert_eq!(c.len(), 1);
        let turns = c[0].symbols.iter().filter(|&&a| a != crate::contour::RelSymbol::S).count();
        assert_eq!(turns, 5, "six corners, one of them at the implicit start");
    }

    #[test]
    fn sequences_are_seeded() {
        for kind in ShapeKind::ALL {
            let a = sequence(kind, 64, 64, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = sequence(kind, 64, 64, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|m| trace_contours(m).len() == 1));
        }
    }
}

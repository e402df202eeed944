//! Straightness prior and the contour distortion metric.

use crate::contour::{next_edge, DccString, Direction, Edge, Point, RelSymbol};

/// Maximum perpendicular distance from any point to the chord through the
/// first and last point. When the chord degenerates (first == last) the
/// maximum Euclidean distance from the first point is used instead.
pub fn straightness(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let p0 = points[0];
    let pl = points[points.len() - 1];
    let (cm, cn) = ((pl.m - p0.m) as f64, (pl.n - p0.n) as f64);
    let chord = (cm * cm + cn * cn).sqrt();
    if chord == 0.0 {
        return points
            .iter()
            .map(|p| {
                let (dm, dn) = ((p.m - p0.m) as f64, (p.n - p0.n) as f64);
                (dm * dm + dn * dn).sqrt()
            })
            .fold(0.0, f64::max);
    }
    points
        .iter()
        .map(|p| {
            let cross = (p.m - p0.m) as f64 * cn - (p.n - p0.n) as f64 * cm;
            cross.abs() / chord
        })
        .fold(0.0, f64::max)
}

/// Points traced by a word of relative symbols, entered heading east at the origin.
pub fn word_points(w: &[RelSymbol]) -> Vec<Point> {
    let mut e = Edge::new(Point::new(0, 0), Direction::E);
    let mut pts = Vec::with_capacity(w.len() + 1);
    pts.push(e.end);
    for &s in w {
        e = next_edge(e, s);
        pts.push(e.end);
    }
    pts
}

/// Straightness of the segment traced by a relative word. Rotation and
/// translation invariance make the entry heading irrelevant.
pub fn word_straightness(w: &[RelSymbol]) -> f64 {
    straightness(&word_points(w))
}

/// Straightness of every window of `ds + 1` symbols, indexed by the base-3
/// code of the window (oldest symbol most significant).
#[derive(Debug, Clone)]
pub struct StraightnessTable {
    ds: usize,
    values: Vec<f64>,
}

impl StraightnessTable {
    pub fn new(ds: usize) -> Self {
        let width = ds + 1;
        let size = 3usize.pow(width as u32);
        let mut values = Vec::with_capacity(size);
        let mut w = vec![RelSymbol::L; width];
        for code in 0..size {
            let mut c = code;
            for slot in w.iter_mut().rev() {
                *slot = RelSymbol::from_index(c % 3);
                c /= 3;
            }
            values.push(word_straightness(&w));
        }
        StraightnessTable { ds, values }
    }

    pub fn ds(&self) -> usize {
        self.ds
    }

    pub fn by_code(&self, code: usize) -> f64 {
        self.values[code]
    }

    pub fn window(&self, w: &[RelSymbol]) -> f64 {
        debug_assert_eq!(w.len(), self.ds + 1);
        self.values[word_code(w)]
    }
}

/// Base-3 code of a word, first symbol most significant.
pub fn word_code(w: &[RelSymbol]) -> usize {
    w.iter().fold(0, |acc, s| acc * 3 + s.index())
}

/// `beta` times the summed straightness of every window of `ds + 1`
/// consecutive relative symbols, measured on the realized edges of `x`.
pub fn prior_cost(x: &DccString, beta: f64, ds: usize) -> f64 {
    if beta == 0.0 || x.symbols.len() < ds + 1 {
        return 0.0;
    }
    let pts: Vec<Point> = x.realize().iter().map(|e| e.end).collect();
    // window for symbol i (1-based) spans edge ends i-ds-1 ..= i
    let total: f64 = (ds + 1..=x.symbols.len()).map(|i| straightness(&pts[i - ds - 1..=i])).sum();
    beta * total
}

/// Same quantity as [`prior_cost`], read from a precomputed window table.
pub fn prior_cost_table(symbols: &[RelSymbol], beta: f64, table: &StraightnessTable) -> f64 {
    let ds = table.ds();
    if beta == 0.0 || symbols.len() < ds + 1 {
        return 0.0;
    }
    beta * symbols.windows(ds + 1).map(|w| table.window(w)).sum::<f64>()
}

/// Sum over the edges of `xhat` of the squared L1 distance to the nearest
/// edge endpoint of `x`.
pub fn distortion(xhat: &DccString, x: &DccString) -> f64 {
    let targets: Vec<Point> = x.realize().iter().map(|e| e.end).collect();
    xhat.realize()
        .iter()
        .map(|e| {
            let d = targets.iter().map(|t| e.end.manhattan(*t)).min().unwrap_or(0) as f64;
            d * d
        })
        .sum()
}

//! Differential chain codes and their realization on the pixel-corner grid.
//!
//! Coordinates follow image convention: `m` grows east, `n` grows south.
//! A contour is an initial point, an absolute first heading and a string of
//! relative turns. Edge 0 is the first edge (initial point advanced along the
//! first heading); edge `k` is produced by relative symbol `k` (1-based).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Absolute heading on the grid, listed clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Direction {
        Self::ALL[i & 3]
    }

    /// Unit displacement `(dm, dn)`.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::N => (0, -1),
            Direction::E => (1, 0),
            Direction::S => (0, 1),
            Direction::W => (-1, 0),
        }
    }

    pub fn turn(self, s: RelSymbol) -> Direction {
        let step = match s {
            RelSymbol::L => 3,
            RelSymbol::S => 0,
            RelSymbol::R => 1,
        };
        Direction::from_index(self.index() + step)
    }

    /// The relative symbol taking `self` to `next`, if one exists (a reversal has none).
    pub fn relative_to(self, next: Direction) -> Option<RelSymbol> {
        match (next.index() + 4 - self.index()) % 4 {
            0 => Some(RelSymbol::S),
            1 => Some(RelSymbol::R),
            3 => Some(RelSymbol::L),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Direction::N => 'N',
            Direction::E => 'E',
            Direction::S => 'S',
            Direction::W => 'W',
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(Direction::N),
            "E" => Ok(Direction::E),
            "S" => Ok(Direction::S),
            "W" => Ok(Direction::W),
            other => Err(Error::Parse(format!("unknown direction `{other}`"))),
        }
    }
}

/// Relative turn: left (counterclockwise on screen), straight, right.
///
/// The derived ordering `L < S < R` is the tie-break order used by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelSymbol {
    L = 0,
    S = 1,
    R = 2,
}

impl RelSymbol {
    pub const ALL: [RelSymbol; 3] = [RelSymbol::L, RelSymbol::S, RelSymbol::R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> RelSymbol {
        Self::ALL[i]
    }

    pub fn as_char(self) -> char {
        match self {
            RelSymbol::L => 'l',
            RelSymbol::S => 's',
            RelSymbol::R => 'r',
        }
    }

    pub fn from_char(c: char) -> Option<RelSymbol> {
        match c {
            'l' => Some(RelSymbol::L),
            's' => Some(RelSymbol::S),
            'r' => Some(RelSymbol::R),
            _ => None,
        }
    }
}

/// Parse a string over `{l,s,r}`.
pub fn parse_symbols(s: &str) -> Result<Vec<RelSymbol>> {
    s.chars()
        .map(|c| RelSymbol::from_char(c).ok_or_else(|| Error::Parse(format!("bad symbol `{c}`"))))
        .collect()
}

pub fn symbols_to_string(symbols: &[RelSymbol]) -> String {
    symbols.iter().map(|s| s.as_char()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point {
    pub m: i32,
    pub n: i32,
}

impl Point {
    pub const fn new(m: i32, n: i32) -> Self {
        Point { m, n }
    }

    pub fn step(self, d: Direction) -> Point {
        let (dm, dn) = d.delta();
        Point::new(self.m + dm, self.n + dn)
    }

    pub fn manhattan(self, other: Point) -> i32 {
        (self.m - other.m).abs() + (self.n - other.n).abs()
    }
}

/// One chain-code step: the head of the edge plus its heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub end: Point,
    pub dir: Direction,
}

impl Edge {
    pub fn new(end: Point, dir: Direction) -> Self {
        Edge { end, dir }
    }

    /// Tail of the edge.
    pub fn start(&self) -> Point {
        let (dm, dn) = self.dir.delta();
        Point::new(self.end.m - dm, self.end.n - dn)
    }
}

pub fn next_edge(e: Edge, s: RelSymbol) -> Edge {
    let dir = e.dir.turn(s);
    Edge::new(e.end.step(dir), dir)
}

/// A chain-coded contour.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DccString {
    pub start: Point,
    pub first_dir: Direction,
    pub symbols: Vec<RelSymbol>,
    /// Closed walks return to `start` after the last edge; the closing edge is
    /// stored like any other (nothing is duplicated).
    pub closed: bool,
}

impl DccString {
    pub fn new(start: Point, first_dir: Direction, symbols: Vec<RelSymbol>) -> Self {
        DccString { start, first_dir, symbols, closed: false }
    }

    pub fn closed(mut self, closed: bool) -> Self {
        self.closed = closed;
        self
    }

    /// Number of relative symbols.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn first_edge(&self) -> Edge {
        Edge::new(self.start.step(self.first_dir), self.first_dir)
    }

    pub fn realize(&self) -> Vec<Edge> {
        realize(self)
    }

    /// All `edge_count() + 1` lattice points visited, starting at `start`.
    pub fn points(&self) -> Vec<Point> {
        let mut pts = Vec::with_capacity(self.edge_count() + 1);
        pts.push(self.start);
        pts.extend(self.realize().iter().map(|e| e.end));
        pts
    }

    pub fn last_edge(&self) -> Edge {
        self.symbols.iter().fold(self.first_edge(), |e, &s| next_edge(e, s))
    }

    /// Rotate a closed contour so that it starts with edge index `k`
    /// (0-based into `realize()`). Open contours are returned unchanged.
    pub fn reanchored(&self, k: usize) -> DccString {
        if !self.closed || k == 0 {
            return self.clone();
        }
        let edges = self.realize();
        let n = edges.len();
        let k = k % n;
        let first = edges[k];
        let mut symbols = Vec::with_capacity(n - 1);
        for t in 1..n {
            let prev = edges[(k + t - 1) % n];
            let cur = edges[(k + t) % n];
            symbols.push(prev.dir.relative_to(cur.dir).expect("closed walk has no reversals"));
        }
        DccString { start: first.start(), first_dir: first.dir, symbols, closed: true }
    }

    /// Bounding rectangle of every visited lattice point.
    pub fn extent(&self) -> (Point, Point) {
        let pts = self.points();
        let min = Point::new(
            pts.iter().map(|p| p.m).min().unwrap_or(0),
            pts.iter().map(|p| p.n).min().unwrap_or(0),
        );
        let max = Point::new(
            pts.iter().map(|p| p.m).max().unwrap_or(0),
            pts.iter().map(|p| p.n).max().unwrap_or(0),
        );
        (min, max)
    }
}

pub fn realize(x: &DccString) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(x.edge_count());
    let mut e = x.first_edge();
    edges.push(e);
    for &s in &x.symbols {
        e = next_edge(e, s);
        edges.push(e);
    }
    edges
}

/// Inclusive ranges of valid edge endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridBounds {
    pub m_min: i32,
    pub m_max: i32,
    pub n_min: i32,
    pub n_max: i32,
}

impl GridBounds {
    pub fn new(m_min: i32, m_max: i32, n_min: i32, n_max: i32) -> Result<Self> {
        if m_max < m_min || n_max < n_min {
            return Err(Error::InvalidArgument("grid bounds must be non-empty".into()));
        }
        Ok(GridBounds { m_min, m_max, n_min, n_max })
    }

    /// Corner lattice of a `width x height` pixel image.
    pub fn for_image(width: usize, height: usize) -> Self {
        GridBounds { m_min: 0, m_max: width as i32, n_min: 0, n_max: height as i32 }
    }

    /// Effectively unbounded.
    pub fn unbounded() -> Self {
        GridBounds { m_min: i32::MIN / 4, m_max: i32::MAX / 4, n_min: i32::MIN / 4, n_max: i32::MAX / 4 }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.m >= self.m_min && p.m <= self.m_max && p.n >= self.n_min && p.n <= self.n_max
    }

    /// Number of possible endpoint locations.
    pub fn locations(&self) -> u64 {
        (self.m_max - self.m_min + 1) as u64 * (self.n_max - self.n_min + 1) as u64
    }

    pub fn contains_string(&self, x: &DccString) -> bool {
        self.contains(x.start) && x.realize().iter().all(|e| self.contains(e.end))
    }
}

impl fmt::Display for DccString {
    /// The two-line text stanza used by the contour file format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "CONTOUR {} {} {} {}",
            self.start.m,
            self.start.n,
            self.first_dir.as_char(),
            u8::from(self.closed)
        )?;
        writeln!(f, "{}", symbols_to_string(&self.symbols))
    }
}

/// Serialize contours in the text stanza format.
pub fn write_contours(contours: &[DccString]) -> String {
    contours.iter().map(|c| c.to_string()).collect()
}

/// Parse the text stanza format. Blank lines between stanzas are ignored.
pub fn read_contours(text: &str) -> Result<Vec<DccString>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((lineno, header)) = lines.next() {
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "CONTOUR" {
            return Err(Error::Parse(format!("line {}: expected `CONTOUR m0 n0 DIR CLOSED`", lineno + 1)));
        }
        let num = |s: &str| {
            s.parse::<i32>().map_err(|_| Error::Parse(format!("line {}: bad integer `{s}`", lineno + 1)))
        };
        let start = Point::new(num(parts[1])?, num(parts[2])?);
        let dir: Direction = parts[3].parse()?;
        let closed = match parts[4] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse(format!("line {}: bad closed flag `{other}`", lineno + 1))),
        };
        // A single-edge contour has an empty symbol line, which the blank filter drops.
        let symbols = match lines.clone().next() {
            Some((_, l)) if !l.trim_start().starts_with("CONTOUR") => {
                lines.next();
                parse_symbols(l.trim())?
            }
            _ => Vec::new(),
        };
        out.push(DccString { start, first_dir: dir, symbols, closed });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelSymbol::*;

    #[test]
    fn next_edge_examples() {
        let e = Edge::new(Point::new(0, 0), Direction::E);
        assert_eq!(next_edge(e, S), Edge::new(Point::new(1, 0), Direction::E));
        assert_eq!(next_edge(e, L), Edge::new(Point::new(0, -1), Direction::N));
        let e = Edge::new(Point::new(3, 5), Direction::S);
        assert_eq!(next_edge(e, R), Edge::new(Point::new(2, 5), Direction::W));
    }

    #[test]
    fn four_turns_restore_heading() {
        for d in Direction::ALL {
            for s in [L, R] {
                let e0 = Edge::new(Point::new(7, -2), d);
                let e4 = (0..4).fold(e0, |e, _| next_edge(e, s));
                // four quarter turns trace a unit square
                assert_eq!(e4.dir, d);
                assert_eq!(e4.end, e0.end);
                assert_ne!(next_edge(e0, s).end, e0.end);
            }
        }
    }

    #[test]
    fn realize_examples() {
        let x = DccString::new(Point::new(0, 0), Direction::E, vec![]);
        assert_eq!(x.realize(), vec![Edge::new(Point::new(1, 0), Direction::E)]);
        let x = DccString::new(Point::new(0, 0), Direction::E, vec![S, S]);
        let ends: Vec<_> = x.realize().iter().map(|e| (e.end.m, e.end.n, e.dir)).collect();
        assert_eq!(ends, vec![(1, 0, Direction::E), (2, 0, Direction::E), (3, 0, Direction::E)]);
        for d in Direction::ALL {
            let x = DccString::new(Point::new(4, 4), d, vec![L, R]);
            assert_eq!(x.last_edge().dir, d);
        }
    }

    #[test]
    fn relative_to_inverts_turn() {
        for d in Direction::ALL {
            for s in RelSymbol::ALL {
                assert_eq!(d.relative_to(d.turn(s)), Some(s));
            }
        }
    }

    #[test]
    fn text_format_round_trip() {
        let a = DccString::new(Point::new(3, 4), Direction::S, parse_symbols("ssrlsrsls").unwrap()).closed(true);
        let b = DccString::new(Point::new(0, 9), Direction::W, vec![]);
        let text = write_contours(&[a.clone(), b.clone()]);
        assert!(text.starts_with("CONTOUR 3 4 S 1\nssrlsrsls\n"));
        assert_eq!(read_contours(&text).unwrap(), vec![a, b]);
        assert!(read_contours("CONTOUR 1 2 X 0\ns\n").is_err());
        assert!(read_contours("CONTOUR 1 2 E 0\nsxq\n").is_err());
    }

    #[test]
    fn reanchor_preserves_edge_set() {
        // unit square: E S W N
        let sq = DccString::new(Point::new(2, 2), Direction::E, vec![R, R, R]).closed(true);
        let re = sq.reanchored(2);
        assert_eq!(re.first_dir, Direction::W);
        let mut a = sq.realize();
        let mut b = re.realize();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}

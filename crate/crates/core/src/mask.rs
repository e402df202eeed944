//! Binary masks: PGM I/O, boundary tracing, rasterization and boundary noise.

use std::collections::HashSet;

use rand::Rng;

use crate::contour::{DccString, Direction, Point, RelSymbol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMask {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl GridMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
        }
        Ok(GridMask { width, height, pixels: vec![false; width * height] })
    }

    pub fn from_rows(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut mask = GridMask::new(width, height)?;
        for (y, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidArgument("ragged mask rows".into()));
            }
            for (x, c) in row.chars().enumerate() {
                mask.set(x, y, c != '.' && c != '0');
            }
        }
        Ok(mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixel lookup with everything outside the image reading as background.
    pub fn at(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    pub fn fill_rect(&mut self, x0: i32, y0: i32, x1: i32, y1: i32) {
        for y in y0.max(0)..y1.min(self.height as i32) {
            for x in x0.max(0)..x1.min(self.width as i32) {
                self.set(x as usize, y as usize, true);
            }
        }
    }
}

fn pgm_tokens(data: &[u8]) -> Result<(Vec<String>, usize)> {
    // magic, width, height, maxval; returns the offset just past the single
    // whitespace byte that ends the header
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < data.len() && (data[i].is_ascii_whitespace() || data[i] == b'#') {
            if data[i] == b'#' {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        tokens.push(String::from_utf8_lossy(&data[start..i]).into_owned());
    }
    Ok((tokens, i + 1))
}

/// Read a binary (P5) or ASCII (P2) PGM. Nonzero samples are object pixels.
pub fn read_pgm(data: &[u8]) -> Result<GridMask> {
    let (tok, offset) = pgm_tokens(data)?;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad PGM header value `{s}`")));
    let (w, h, maxval) = (parse(&tok[1])?, parse(&tok[2])?, parse(&tok[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("bad PGM maxval {maxval}")));
    }
    let mut mask = GridMask::new(w, h)?;
    match tok[0].as_str() {
        "P5" => {
            let bps = if maxval > 255 { 2 } else { 1 };
            let body = data.get(offset..).unwrap_or(&[]);
            if body.len() < w * h * bps {
                return Err(Error::Parse("truncated PGM raster".into()));
            }
            for idx in 0..w * h {
                let v = if bps == 1 { body[idx] as u16 } else { u16::from_be_bytes([body[2 * idx], body[2 * idx + 1]]) };
                mask.pixels[idx] = v != 0;
            }
        }
        "P2" => {
            let text = String::from_utf8_lossy(data.get(offset.min(data.len())..).unwrap_or(&[])).into_owned();
            let mut values = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>());
            for idx in 0..w * h {
                let v = values.next().ok_or_else(|| Error::Parse("truncated PGM raster".into()))?;
                mask.pixels[idx] = parse(&v)? != 0;
            }
        }
        other => return Err(Error::Parse(format!("unsupported PGM magic `{other}`"))),
    }
    Ok(mask)
}

/// Binary PGM with object = 255.
pub fn write_pgm(mask: &GridMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend(mask.pixels.iter().map(|&p| if p { 255u8 } else { 0 }));
    out
}

/// The two pixels on either side of a directed unit edge starting at `p`:
/// `(right, left)` relative to the heading.
fn edge_sides(p: Point, d: Direction) -> ((i32, i32), (i32, i32)) {
    let (m, n) = (p.m, p.n);
    match d {
        Direction::E => ((m, n), (m, n - 1)),
        Direction::W => ((m - 1, n - 1), (m - 1, n)),
        Direction::S => ((m - 1, n), (m, n)),
        Direction::N => ((m, n - 1), (m - 1, n - 1)),
    }
}

/// `(ahead-left, ahead-right)` pixels at corner `p` for heading `d`.
fn ahead_pixels(p: Point, d: Direction) -> ((i32, i32), (i32, i32)) {
    let (m, n) = (p.m, p.n);
    let (nw, ne, sw, se) = ((m - 1, n - 1), (m, n - 1), (m - 1, n), (m, n));
    match d {
        Direction::E => (ne, se),
        Direction::S => (se, sw),
        Direction::W => (sw, nw),
        Direction::N => (nw, ne),
    }
}

/// Directed boundary edges (object on the right), in raster order of their
/// start corner, then E, S, W, N.
fn boundary_edges(mask: &GridMask) -> Vec<(Point, Direction)> {
    let mut out = Vec::new();
    for n in 0..=mask.height as i32 {
        for m in 0..=mask.width as i32 {
            let p = Point::new(m, n);
            for d in [Direction::E, Direction::S, Direction::W, Direction::N] {
                let (right, left) = edge_sides(p, d);
                if mask.at(right.0, right.1) && !mask.at(left.0, left.1) {
                    out.push((p, d));
                }
            }
        }
    }
    out
}

/// Closed boundary walks between object and background, object on the right
/// (so outer boundaries run clockwise on screen). Objects are 4-connected.
/// Contours appear in raster order of their first boundary corner.
pub fn trace_contours(mask: &GridMask) -> Vec<DccString> {
    let edges = boundary_edges(mask);
    let mut visited: HashSet<(Point, Direction)> = HashSet::with_capacity(edges.len());
    let mut out = Vec::new();
    for &(p0, d0) in &edges {
        if visited.contains(&(p0, d0)) {
            continue;
        }
        visited.insert((p0, d0));
        let mut symbols = Vec::new();
        let mut corner = p0.step(d0);
        let mut dir = d0;
        loop {
            let (la, ra) = ahead_pixels(corner, dir);
            let sym = if !mask.at(ra.0, ra.1) {
                RelSymbol::R
            } else if !mask.at(la.0, la.1) {
                RelSymbol::S
            } else {
                RelSymbol::L
            };
            let next = dir.turn(sym);
            if corner == p0 && next == d0 {
                break;
            }
            visited.insert((corner, next));
            symbols.push(sym);
            dir = next;
            corner = corner.step(dir);
        }
        out.push(DccString { start: p0, first_dir: d0, symbols, closed: true });
    }
    out
}

/// Fill the region enclosed by the given walks with even-odd parity, using
/// their vertical edges. Edges outside the image are ignored.
pub fn rasterize(contours: &[DccString], width: usize, height: usize) -> Result<GridMask> {
    let mut mask = GridMask::new(width, height)?;
    let mut toggles = vec![0u8; (width + 1) * height];
    for c in contours {
        for e in c.realize() {
            let row = match e.dir {
                Direction::S => e.end.n - 1,
                Direction::N => e.end.n,
                _ => continue,
            };
            let col = e.end.m;
            if row < 0 || row >= height as i32 || col < 0 || col > width as i32 {
                continue;
            }
            toggles[row as usize * (width + 1) + col as usize] ^= 1;
        }
    }
    for y in 0..height {
        let mut inside = false;
        for x in 0..width {
            if toggles[y * (width + 1) + x] == 1 {
                inside = !inside;
            }
            mask.set(x, y, inside);
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorruptionReport {
    pub boundary_edges: usize,
    pub replacements: usize,
}

/// Boundary noise: each boundary edge of the original mask, with probability
/// `delta`, copies the original value of one side's pixel onto the other side
/// (side chosen uniformly). Replacements that land outside the image are dropped.
pub fn corrupt_mask<R: Rng + ?Sized>(mask: &GridMask, delta: f64, rng: &mut R) -> Result<(GridMask, CorruptionReport)> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0,1], got {delta}")));
    }
    let mut out = mask.clone();
    let mut report = CorruptionReport::default();
    for (p, d) in boundary_edges(mask) {
        report.boundary_edges += 1;
        if !rng.random_bool(delta) {
            continue;
        }
        let (right, left) = edge_sides(p, d);
        let (target, source) = if rng.random_bool(0.5) { (right, left) } else { (left, right) };
        let (tx, ty) = target;
        if tx < 0 || ty < 0 || tx as usize >= mask.width || ty as usize >= mask.height {
            continue;
        }
        out.set(tx as usize, ty as usize, mask.at(source.0, source.1));
        report.replacements += 1;
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::symbols_to_string;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_mask_has_no_contours() {
        let m = GridMask::new(5, 4).unwrap();
        assert!(trace_contours(&m).is_empty());
    }

    #[test]
    fn single_pixel() {
        let mut m = GridMask::new(5, 5).unwrap();
        m.set(2, 2, true);
        let c = trace_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].edge_count(), 4);
        assert_eq!(c[0].start, Point::new(2, 2));
        assert_eq!(c[0].first_dir, Direction::E);
        assert_eq!(symbols_to_string(&c[0].symbols), "rrr");
        assert_eq!(c[0].last_edge().end, c[0].start);
    }

    #[test]
    fn two_by_two_block() {
        let m = GridMask::from_rows(&["....", ".##.", ".##.", "...."]).unwrap();
        let c = trace_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].edge_count(), 8);
        assert_eq!(symbols_to_string(&c[0].symbols), "srsrsrs");
    }

    #[test]
    fn hole_and_diagonal() {
        let ring = GridMask::from_rows(&["###", "#.#", "###"]).unwrap();
        let c = trace_contours(&ring);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].edge_count(), 12);
        assert_eq!(c[1].edge_count(), 4);
        assert_eq!(rasterize(&c, 3, 3).unwrap(), ring);

        let diag = GridMask::from_rows(&["#.", ".#"]).unwrap();
        let c = trace_contours(&diag);
        assert_eq!(c.len(), 2);
        assert_eq!(rasterize(&c, 2, 2).unwrap(), diag);
    }

    #[test]
    fn pgm_round_trip() {
        let m = GridMask::from_rows(&["#..#", ".##.", "#..."]).unwrap();
        assert_eq!(read_pgm(&write_pgm(&m)).unwrap(), m);
        let ascii = b"P2\n# comment\n4 3\n1\n1 0 0 1\n0 1 1 0\n1 0 0 0\n";
        assert_eq!(read_pgm(ascii).unwrap(), m);
        assert!(read_pgm(b"P7\n1 1\n1\n0").is_err());
        assert!(read_pgm(b"P5\n4 4\n255\n\x00").is_err());
    }

    #[test]
    fn corruption_zero_and_one() {
        let m = GridMask::from_rows(&["....", ".##.", ".##.", "...."]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (same, rep) = corrupt_mask(&m, 0.0, &mut rng).unwrap();
        assert_eq!(same, m);
        assert_eq!(rep.boundary_edges, 8);
        assert_eq!(rep.replacements, 0);
        let (_, rep) = corrupt_mask(&m, 1.0, &mut rng).unwrap();
        assert_eq!(rep.replacements, 8);
        assert!(corrupt_mask(&m, 1.5, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn trace_then_rasterize_is_identity(
            w in 1usize..9, h in 1usize..9, bits in prop::collection::vec(any::<bool>(), 64),
        ) {
            let mut m = GridMask::new(w, h).unwrap();
            for y in 0..h {
                for x in 0..w {
                    m.set(x, y, bits[y * 8 + x]);
                }
            }
            let contours = trace_contours(&m);
            for c in &contours {
                prop_assert!(c.closed);
                prop_assert_eq!(c.last_edge().end, c.start);
            }
            prop_assert_eq!(rasterize(&contours, w, h).unwrap(), m);
        }
    }
}

//! Binary rasters for box-counting.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryRaster {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryRaster {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize) {
        if x < self.width && y < self.height {
            self.bits[y * self.width + x] = true;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Marks a 1-pixel line by sampling it at unit steps along its longer axis.
    /// Pixels outside the raster are ignored.
    pub fn draw_line(&mut self, a: (f64, f64), b: (f64, f64)) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let (x, y) = (a.0 + t * dx, a.1 + t * dy);
            if x >= 0.0 && y >= 0.0 {
                self.set(x.floor() as usize, y.floor() as usize);
            }
        }
    }

    pub fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                self.bits[y * self.width + x] = true;
            }
        }
    }

    /// Number of grid boxes of side `s`, anchored at the origin, that contain
    /// foreground. Boxes cut by the right/bottom edge count like full ones.
    pub fn box_count(&self, s: usize) -> usize {
        assert!(s > 0);
        let bw = self.width.div_ceil(s);
        let bh = self.height.div_ceil(s);
        let mut hit = vec![false; bw * bh];
        for (x, y) in self.foreground() {
            hit[(y / s) * bw + x / s] = true;
        }
        hit.into_iter().filter(|&b| b).count()
    }

    /// Plain PBM (`P1`) text.
    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.width, self.height);
        for row in self.bits.chunks(self.width.max(1)) {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }

    pub fn from_pbm(text: &str) -> Option<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        if tokens.next()? != "P1" {
            return None;
        }
        let width: usize = tokens.next()?.parse().ok()?;
        let height: usize = tokens.next()?.parse().ok()?;
        let mut r = BinaryRaster::new(width, height);
        let mut i = 0;
        for tok in tokens {
            for c in tok.chars() {
                match c {
                    '0' => {}
                    '1' => *r.bits.get_mut(i)? = true,
                    _ => return None,
                }
                i += 1;
            }
        }
        (i == width * height).then_some(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_count_of_full_raster() {
        let mut r = BinaryRaster::new(16, 16);
        r.fill_rect(0, 0, 16, 16);
        assert_eq!(r.box_count(1), 256);
        assert_eq!(r.box_count(4), 16);
        assert_eq!(r.box_count(5), 16); // 4x4 partial grid
    }

    #[test]
    fn pbm_roundtrip() {
        let mut r = BinaryRaster::new(5, 3);
        r.draw_line((0.5, 0.5), (4.5, 2.5));
        assert_eq!(BinaryRaster::from_pbm(&r.to_pbm()), Some(r));
    }
}

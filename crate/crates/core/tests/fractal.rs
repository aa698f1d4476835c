use retina_vasc::params::{fractal_dimension, FD_BOX_SIZES};
use retina_vasc::raster::BinaryRaster;
use retina_vasc::synth::{filled_square, koch_raster};

/// Box count by scanning every box's pixels through `get`.
fn brute_count(r: &BinaryRaster, s: usize) -> usize {
    let mut n = 0;
    for by in (0..r.height()).step_by(s) {
        for bx in (0..r.width()).step_by(s) {
            let hit = (by..(by + s).min(r.height())).any(|y| (bx..(bx + s).min(r.width())).any(|x| r.get(x, y)));
            n += hit as usize;
        }
    }
    n
}

/// Least-squares slope computed with explicit normal equations.
fn brute_fd(r: &BinaryRaster) -> f64 {
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    let n = FD_BOX_SIZES.len() as f64;
    for &s in &FD_BOX_SIZES {
        let x = (1.0 / s as f64).ln();
        let y = (brute_count(r, s) as f64).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn both(r: &BinaryRaster) -> f64 {
    let fd = fractal_dimension(r, &FD_BOX_SIZES).unwrap();
    let oracle = brute_fd(r);
    assert!((fd - oracle).abs() < 1e-9, "engine {fd} vs brute force {oracle}");
    fd
}

#[test]
fn line_square_and_koch() {
    let line = koch_raster(0, 1024).unwrap();
    let fd = both(&line);
    assert!((fd - 1.0).abs() <= 0.05, "line {fd}");

    let sq = filled_square(1024, 1024);
    assert!(both(&sq) >= 1.9);

    let koch = koch_raster(5, 1024).unwrap();
    let fd = both(&koch);
    assert!((fd - 1.26).abs() <= 0.08, "koch {fd}");
}

#[test]
fn box_counts_agree_on_odd_sizes() {
    let k = koch_raster(3, 300).unwrap();
    for s in [1, 3, 7, 64, 299, 300, 512] {
        assert_eq!(k.box_count(s), brute_count(&k, s), "s = {s}");
    }
}

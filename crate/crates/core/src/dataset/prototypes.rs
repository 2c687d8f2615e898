//! Class prototypes standing in for digit images: smooth random bumps, one
//! pattern per class, kept apart by a minimum pairwise distance.

use rand::Rng;

use crate::rng;

const PROTO_STREAM: u64 = 0x9707_0000;
const BUMPS: usize = 3;
const MAX_TRIES: usize = 1000;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn separated(
    n: usize,
    min_sep: f64,
    stream: u64,
    seed: u64,
    mut draw: impl FnMut(&mut rng::Rng) -> Vec<f64>,
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
    for class in 0..n {
        let mut r = rng::rng_for(seed, stream, class as u64);
        let mut best = draw(&mut r);
        let mut best_gap = out.iter().map(|o| distance(o, &best)).fold(f64::INFINITY, f64::min);
        for _ in 0..MAX_TRIES {
            if best_gap >= min_sep {
                break;
            }
            let cand = draw(&mut r);
            let gap = out.iter().map(|o| distance(o, &cand)).fold(f64::INFINITY, f64::min);
            if gap > best_gap {
                best = cand;
                best_gap = gap;
            }
        }
        out.push(best);
    }
    out
}

/// `n` vectors of length `d`, each a sum of Gaussian bumps.
pub fn vector_prototypes(n: usize, d: usize, seed: u64, min_sep: f64) -> Vec<Vec<f64>> {
    separated(n, min_sep, PROTO_STREAM, seed, |r| {
        let mut v = vec![0.0; d];
        for _ in 0..BUMPS {
            let c = r.gen_range(0.0..d as f64);
            let w: f64 = r.gen_range(1.5..4.0);
            let a = r.gen_range(0.5..1.5) * if r.gen_bool(0.5) { 1.0 } else { -1.0 };
            for (i, x) in v.iter_mut().enumerate() {
                let t = (i as f64 - c) / w;
                *x += a * (-0.5 * t * t).exp();
            }
        }
        v
    })
}

/// `n` row-major `g x g` grids of positive bumps, centred away from the border
/// so that rotations keep most of the mass inside the frame.
pub fn grid_prototypes(n: usize, g: usize, seed: u64, min_sep: f64) -> Vec<Vec<f64>> {
    separated(n, min_sep, PROTO_STREAM + 1, seed, |r| {
        let gf = g as f64;
        let mut v = vec![0.0; g * g];
        for _ in 0..BUMPS {
            let (ci, cj) = (r.gen_range(0.25 * gf..0.75 * gf), r.gen_range(0.25 * gf..0.75 * gf));
            let w: f64 = r.gen_range(0.06 * gf..0.16 * gf);
            let a = r.gen_range(0.5..1.5);
            for i in 0..g {
                for j in 0..g {
                    let (di, dj) = ((i as f64 - ci) / w, (j as f64 - cj) / w);
                    v[i * g + j] += a * (-0.5 * (di * di + dj * dj)).exp();
                }
            }
        }
        v
    })
}

/// Rotate a row-major `g x g` grid counter-clockwise by `degrees` about its
/// centre with bilinear interpolation. Points falling outside the frame read 0.
pub fn rotate_grid(grid: &[f64], g: usize, degrees: f64) -> Vec<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    let mid = (g as f64 - 1.0) / 2.0;
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= g as isize || j >= g as isize {
            0.0
        } else {
            grid[i as usize * g + j as usize]
        }
    };
    let mut out = vec![0.0; g * g];
    for i in 0..g {
        for j in 0..g {
            let (y, x) = (i as f64 - mid, j as f64 - mid);
            // Inverse map: where in the source does this output pixel come from.
            let u = c * y - s * x + mid;
            let v = s * y + c * x + mid;
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = (u - u0, v - v0);
            let (iu, iv) = (u0 as isize, v0 as isize);
            let mut val = (1.0 - fu) * (1.0 - fv) * at(iu, iv);
            if fv > 0.0 {
                val += (1.0 - fu) * fv * at(iu, iv + 1);
            }
            if fu > 0.0 {
                val += fu * (1.0 - fv) * at(iu + 1, iv);
                if fv > 0.0 {
                    val += fu * fv * at(iu + 1, iv + 1);
                }
            }
            out[i * g + j] = val;
        }
    }
    out
}

//! Separable bicubic upsampling with the Catmull-Rom kernel.

/// Catmull-Rom spline through `p1`..`p2` at `t ∈ [0, 1]`.
///
/// Written in difference form so that equal inputs return that value
/// bit-exactly and `t = 0` returns `p1` exactly.
#[inline]
pub fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let a1 = 0.5 * (p2 - p0);
    let a2 = (p0 - p1) - 1.5 * (p1 - p2) - 0.5 * (p3 - p2);
    let a3 = 1.5 * (p1 - p2) + 0.5 * (p3 - p0);
    p1 + t * (a1 + t * (a2 + t * a3))
}

fn upsample_line(src: &[f64], factor: usize, out: &mut [f64]) {
    let n = src.len() as isize;
    let at = |i: isize| src[i.clamp(0, n - 1) as usize];
    for (o, slot) in out.iter_mut().enumerate() {
        let i = (o / factor) as isize;
        let t = (o % factor) as f64 / factor as f64;
        *slot = if t == 0.0 {
            at(i)
        } else {
            catmull_rom(at(i - 1), at(i), at(i + 1), at(i + 2), t)
        };
    }
}

/// Upsample a row-major `ny × nx` grid by an integer factor in both axes.
///
/// Output pixel `(i, j)` samples source coordinate `(i / factor, j / factor)`,
/// so every source node is reproduced exactly; neighbours beyond the edge are
/// clamped.
pub fn upsample_catmull_rom(values: &[f64], nx: usize, ny: usize, factor: usize) -> Vec<f64> {
    assert_eq!(values.len(), nx * ny, "grid shape");
    assert!(factor >= 1, "factor must be >= 1");
    if factor == 1 {
        return values.to_vec();
    }
    let (ox, oy) = (nx * factor, ny * factor);
    let mut rows = vec![0.0; ny * ox];
    for y in 0..ny {
        upsample_line(&values[y * nx..(y + 1) * nx], factor, &mut rows[y * ox..(y + 1) * ox]);
    }
    let mut out = vec![0.0; oy * ox];
    let mut column = vec![0.0; ny];
    let mut column_out = vec![0.0; oy];
    for x in 0..ox {
        for y in 0..ny {
            column[y] = rows[y * ox + x];
        }
        upsample_line(&column, factor, &mut column_out);
        for y in 0..oy {
            out[y * ox + x] = column_out[y];
        }
    }
    out
}

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};

/// Dense solve of the discrete Poisson equation on a `width × height` pixel
/// grid. Pixels flagged `inside` are unknowns; every other pixel keeps its
/// `fixed` value. For each neighbour pair the guidance difference is the
/// average of `field` at both ends dotted with the coordinate offset, so a
/// field that is the exact gradient of a linear function is reproduced
/// exactly.
pub fn solve(
    width: usize,
    height: usize,
    coords: &Array2<f64>,
    inside: &[bool],
    fixed: &Array2<f64>,
    field: &Array3<f64>,
) -> Array2<f64> {
    let channels = fixed.ncols();
    let unknowns: Vec<usize> = (0..inside.len()).filter(|&p| inside[p]).collect();
    let mut slot = vec![usize::MAX; inside.len()];
    for (k, &p) in unknowns.iter().enumerate() {
        slot[p] = k;
    }
    let n = unknowns.len();
    let mut out = fixed.clone();
    if n == 0 {
        return out;
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, channels);
    for (k, &p) in unknowns.iter().enumerate() {
        let (px, py) = (p % width, p / width);
        let mut neighbours = Vec::with_capacity(4);
        if px > 0 {
            neighbours.push(p - 1);
        }
        if px + 1 < width {
            neighbours.push(p + 1);
        }
        if py > 0 {
            neighbours.push(p - width);
        }
        if py + 1 < height {
            neighbours.push(p + width);
        }
        for q in neighbours {
            a[(k, k)] += 1.0;
            let dx = coords[[p, 0]] - coords[[q, 0]];
            let dy = coords[[p, 1]] - coords[[q, 1]];
            for c in 0..channels {
                let gx = 0.5 * (field[[p, c, 0]] + field[[q, c, 0]]);
                let gy = 0.5 * (field[[p, c, 1]] + field[[q, c, 1]]);
                rhs[(k, c)] += gx * dx + gy * dy;
                if !inside[q] {
                    rhs[(k, c)] += fixed[[q, c]];
                }
            }
            if inside[q] {
                a[(k, slot[q])] -= 1.0;
            }
        }
    }
    let lu = a.lu();
    for c in 0..channels {
        let col = DVector::from_iterator(n, rhs.column(c).iter().copied());
        let x = lu.solve(&col).expect("Poisson system is non-singular");
        for (k, &p) in unknowns.iter().enumerate() {
            out[[p, c]] = x[k];
        }
    }
    out
}

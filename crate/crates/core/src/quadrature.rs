//! Quadrature rules on k-simplices in barycentric coordinates. Weights sum to
//! one and are multiplied by the simplex volume by the caller.

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Physical coordinates of every point on the simplex `vertices`.
    pub fn map(&self, vertices: &[&[f64]]) -> Vec<Vec<f64>> {
        let n = vertices[0].len();
        self.points
            .iter()
            .map(|lam| {
                (0..n)
                    .map(|r| lam.iter().zip(vertices).map(|(l, v)| l * v[r]).sum())
                    .collect()
            })
            .collect()
    }
}

/// Exact for polynomials of degree 2 on any k-simplex: vertices with weight
/// `(2 - k) / ((k+1)(k+2))`, edge midpoints with weight `4 / ((k+1)(k+2))`.
pub fn degree_two(k: usize) -> Rule {
    let denom = ((k + 1) * (k + 2)) as f64;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let wv = (2.0 - k as f64) / denom;
    if wv != 0.0 {
        for i in 0..=k {
            let mut lam = vec![0.0; k + 1];
            lam[i] = 1.0;
            points.push(lam);
            weights.push(wv);
        }
    }
    for i in 0..=k {
        for j in i + 1..=k {
            let mut lam = vec![0.0; k + 1];
            lam[i] = 0.5;
            lam[j] = 0.5;
            points.push(lam);
            weights.push(4.0 / denom);
        }
    }
    Rule { points, weights }
}

/// Degree-5 rules on segments and triangles; degree 2 above that.
pub fn high_order(k: usize) -> Rule {
    match k {
        1 => {
            let a = 0.5 * (0.6f64).sqrt();
            Rule {
                points: vec![
                    vec![0.5 - a, 0.5 + a],
                    vec![0.5, 0.5],
                    vec![0.5 + a, 0.5 - a],
                ],
                weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
            }
        }
        2 => {
            let s = 15f64.sqrt();
            let a1 = (6.0 - s) / 21.0;
            let a2 = (6.0 + s) / 21.0;
            let w1 = (155.0 - s) / 1200.0;
            let w2 = (155.0 + s) / 1200.0;
            let mut points = vec![vec![1.0 / 3.0; 3]];
            let mut weights = vec![9.0 / 40.0];
            for (a, w) in [(a1, w1), (a2, w2)] {
                for i in 0..3 {
                    let mut lam = vec![a; 3];
                    lam[i] = 1.0 - 2.0 * a;
                    points.push(lam);
                    weights.push(w);
                }
            }
            Rule { points, weights }
        }
        _ => degree_two(k),
    }
}

//! Map item embeddings to RGB with a small perceptron trained to keep items
//! distinguishable while pulling colors toward a preferred palette.

use crate::autodiff::Tape;
use crate::error::{Result, ShtError};
use crate::rng::Rng;
use crate::tensor::{DenseMatrix, Real};
use crate::train::Adam;

pub type Rgb = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct ColorConfig {
    /// Optimization steps.
    pub steps: usize,
    /// Items per step.
    pub batch: usize,
    pub lr: f64,
    /// Weight of the palette distance term.
    pub mu: f64,
    pub slope: f64,
    pub seed: u64,
}

impl Default for ColorConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch: 256,
            lr: 1e-2,
            mu: 1.0,
            slope: 0.5,
            seed: 2022,
        }
    }
}

fn nearest(c: &[f64], palette: &[Rgb]) -> usize {
    let dist = |p: &Rgb| -> f64 { p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum() };
    (0..palette.len())
        .min_by(|&a, &b| dist(&palette[a]).total_cmp(&dist(&palette[b])))
        .unwrap_or(0)
}

/// `d → d → 3` perceptron with sigmoid outputs; trained on
/// `cross-entropy(item id | color) + μ · min_p ‖color − palette_p‖²`.
/// Returns one color per embedding row, clamped to `[0, 1]`.
pub fn embedding_to_color<T: Real>(embeddings: &DenseMatrix<T>, palette: &[Rgb], cfg: &ColorConfig) -> Result<Vec<Rgb>> {
    if palette.len() < 2 {
        return Err(ShtError::invalid("palette must contain at least 2 colors"));
    }
    let x = embeddings.to_f64();
    let (n, d) = x.shape();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = Rng::seed(cfg.seed);
    let xavier = |rng: &mut Rng, r: usize, c: usize| rng.uniform_matrix::<f64>(r, c, (6.0 / (r + c) as f64).sqrt());
    // w1, b1, w2, b2, classifier w, classifier b
    let mut params = vec![
        xavier(&mut rng, d, d),
        DenseMatrix::zeros(1, d),
        xavier(&mut rng, 3, d),
        DenseMatrix::zeros(1, 3),
        xavier(&mut rng, n, 3),
        DenseMatrix::zeros(1, n),
    ];
    let mut adam = Adam::new(0.9, 0.999, 1e-8, &params);

    let forward = |tape: &mut Tape<f64>, v: &[crate::autodiff::Var], input: crate::autodiff::Var| -> Result<_> {
        let w1t = tape.transpose(v[0])?;
        let h = tape.matmul(input, w1t)?;
        let h = tape.add_row(h, v[1])?;
        let h = tape.leaky_relu(h, cfg.slope)?;
        let w2t = tape.transpose(v[2])?;
        let c = tape.matmul(h, w2t)?;
        let c = tape.add_row(c, v[3])?;
        tape.sigmoid(c)
    };

    for _ in 0..cfg.steps {
        let rows: Vec<usize> = if n <= cfg.batch {
            (0..n).collect()
        } else {
            (0..cfg.batch).map(|_| rng.below(n)).collect()
        };
        let mut tape = Tape::new();
        let v = params.iter().map(|p| tape.param(p.clone())).collect::<Result<Vec<_>>>()?;
        let input = tape.constant(x.gather_rows(&rows))?;
        let colors = forward(&mut tape, &v, input)?;
        let wct = tape.transpose(v[4])?;
        let logits = tape.matmul(colors, wct)?;
        let logits = tape.add_row(logits, v[5])?;
        let xent = tape.softmax_cross_entropy(logits, &rows)?;
        let target = {
            let c = tape.value(colors);
            DenseMatrix::from_fn(rows.len(), 3, |r, k| palette[nearest(c.row(r), palette)][k])
        };
        let target = tape.constant(target)?;
        let diff = tape.sub(colors, target)?;
        let sq = tape.hadamard(diff, diff)?;
        let per_row = tape.mean_all(sq)?;
        let pal = tape.scale(per_row, 3.0 * cfg.mu)?;
        let loss = tape.add(xent, pal)?;
        let mut g = tape.backward(loss)?;
        let grads: Vec<_> = v.iter().map(|&p| g.take(p)).collect();
        adam.update(&mut params, &grads, cfg.lr)?;
    }

    let mut tape = Tape::new();
    let v = params.iter().map(|p| tape.constant(p.clone())).collect::<Result<Vec<_>>>()?;
    let input = tape.constant(x)?;
    let colors = forward(&mut tape, &v, input)?;
    let c = tape.value(colors);
    Ok((0..n)
        .map(|r| {
            let row = c.row(r);
            [row[0].clamp(0.0, 1.0), row[1].clamp(0.0, 1.0), row[2].clamp(0.0, 1.0)]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_clusters(per: usize, d: usize) -> DenseMatrix<f64> {
        let mut rng = Rng::seed(9);
        DenseMatrix::from_fn(2 * per, d, |r, c| {
            let centre = if (r < per) == (c % 2 == 0) { 2.0 } else { -2.0 };
            centre + 0.1 * rng.normal()
        })
    }

    fn sq(a: &Rgb, b: &Rgb) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    fn mean(cs: &[Rgb]) -> Rgb {
        let mut m = [0.0; 3];
        for c in cs {
            for k in 0..3 {
                m[k] += c[k] / cs.len() as f64;
            }
        }
        m
    }

    #[test]
    fn clusters_separate_in_color() {
        let per = 20;
        let x = two_clusters(per, 8);
        let palette = [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let cfg = ColorConfig {
            steps: 150,
            ..ColorConfig::default()
        };
        let colors = embedding_to_color(&x, &palette, &cfg).unwrap();
        let (a, b) = colors.split_at(per);
        let (ma, mb) = (mean(a), mean(b));
        let intra = (a.iter().map(|c| sq(c, &ma)).sum::<f64>() + b.iter().map(|c| sq(c, &mb)).sum::<f64>()) / (2 * per) as f64;
        let inter = sq(&ma, &mb) / 4.0;
        assert!(intra < inter, "intra {intra} inter {inter}");
    }

    #[test]
    fn identical_inputs_identical_colors_in_range() {
        let x = DenseMatrix::from_fn(5, 4, |r, c| if r < 3 { 0.5 } else { (r * c) as f64 });
        let colors = embedding_to_color(&x, &[[0.0; 3], [1.0; 3]], &ColorConfig { steps: 20, ..Default::default() }).unwrap();
        assert_eq!(colors[0], colors[1]);
        assert_eq!(colors[1], colors[2]);
        assert!(colors.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn palette_needs_two_colors() {
        let x = DenseMatrix::<f64>::zeros(3, 2);
        assert!(embedding_to_color(&x, &[[0.0; 3]], &ColorConfig::default()).is_err());
    }
}

//! Reference computations written independently of the library, used to
//! check its results. Each one takes the slow, obvious route.

#![allow(dead_code)]

use std::f64::consts::PI;

/// `(alpha, strength, probabilities, K / S, 1 / max alpha)` from raw evidence.
pub fn dirichlet(evidence: &[f64]) -> (Vec<f64>, f64, Vec<f64>, f64, f64) {
    let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
    let mut strength = 0.0;
    for a in &alpha {
        strength += a;
    }
    let probs = alpha.iter().map(|a| a / strength).collect();
    let mut max = f64::NEG_INFINITY;
    for a in &alpha {
        if *a > max {
            max = *a;
        }
    }
    (alpha.clone(), strength, probs, alpha.len() as f64 / strength, 1.0 / max)
}

/// Belief masses and uncertainty of an evidence vector.
pub fn opinion(evidence: &[f64]) -> (Vec<f64>, f64) {
    let (_, s, _, u, _) = dirichlet(evidence);
    (evidence.iter().map(|e| e / s).collect(), u)
}

/// Dempster's rule over the frame `{0..K}` with focal elements the singletons and
/// the whole frame, evaluated by enumerating every pair of focal sets and
/// intersecting them as bitmasks.
pub fn dempster(b1: &[f64], u1: f64, b2: &[f64], u2: f64) -> Option<(Vec<f64>, f64, f64)> {
    let k = b1.len();
    let frame: u64 = (1u64 << k) - 1;
    let focal = |b: &[f64], u: f64| -> Vec<(u64, f64)> {
        let mut f: Vec<(u64, f64)> = b.iter().enumerate().map(|(i, &m)| (1u64 << i, m)).collect();
        f.push((frame, u));
        f
    };
    let (f1, f2) = (focal(b1, u1), focal(b2, u2));
    let mut joint = std::collections::BTreeMap::<u64, f64>::new();
    let mut empty = 0.0;
    for &(s1, m1) in &f1 {
        for &(s2, m2) in &f2 {
            let inter = s1 & s2;
            if inter == 0 {
                empty += m1 * m2;
            } else {
                *joint.entry(inter).or_insert(0.0) += m1 * m2;
            }
        }
    }
    if empty >= 1.0 - 1e-12 {
        return None;
    }
    let norm = 1.0 - empty;
    let beliefs = (0..k)
        .map(|i| joint.get(&(1u64 << i)).copied().unwrap_or(0.0) / norm)
        .collect();
    let u = joint.get(&frame).copied().unwrap_or(0.0) / norm;
    Some((beliefs, u, empty))
}

/// Unnormalized forward 2D DFT by the defining double sum, O(H^2 W^2).
pub fn dft2(height: usize, width: usize, x: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); height * width];
    for u in 0..height {
        for v in 0..width {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..height {
                for c in 0..width {
                    let angle = -2.0 * PI * ((u * r) as f64 / height as f64 + (v * c) as f64 / width as f64);
                    re += x[r * width + c] * angle.cos();
                    im += x[r * width + c] * angle.sin();
                }
            }
            out[u * width + v] = (re, im);
        }
    }
    out
}

/// EDL loss `log S - log alpha_c` plus the AvU penalty on `1 / max alpha`, straight from the definitions.
pub fn total_loss(evidence: &[f64], class: usize, avu_weight: f64) -> f64 {
    let (alpha, s, _, _, u_hat) = dirichlet(evidence);
    let mut loss = s.ln() - alpha[class].ln();
    if avu_weight != 0.0 {
        let mut top = 0;
        for (i, e) in evidence.iter().enumerate() {
            if *e > evidence[top] {
                top = i;
            }
        }
        let penalty = if top == class {
            -(1.0 - u_hat + 1e-7).ln()
        } else {
            -(u_hat + 1e-7).ln()
        };
        loss += avu_weight * penalty;
    }
    loss
}

/// Softplus written without the library's branch structure.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Two-layer ReLU network evaluated with plain loops.
/// `w1` is `hidden x input`, `w2` is `classes x hidden`, both row-major.
pub fn mlp_logits(
    w1: &[f64],
    b1: &[f64],
    w2: &[f64],
    b2: &[f64],
    input: &[f64],
) -> Vec<f64> {
    let (hidden, d) = (b1.len(), input.len());
    let mut h = vec![0.0; hidden];
    for j in 0..hidden {
        let mut acc = b1[j];
        for i in 0..d {
            acc += w1[j * d + i] * input[i];
        }
        h[j] = acc.max(0.0);
    }
    (0..b2.len())
        .map(|k| {
            let mut acc = b2[k];
            for j in 0..hidden {
                acc += w2[k * hidden + j] * h[j];
            }
            acc
        })
        .collect()
}

/// Binary logistic regression fitted by full-batch gradient descent; returns `(w, b)`.
pub fn logistic_regression(xs: &[Vec<f64>], ys: &[usize], steps: usize, lr: f64) -> (Vec<f64>, f64) {
    let d = xs[0].len();
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let n = xs.len() as f64;
    for _ in 0..steps {
        let (mut gw, mut gb) = (vec![0.0; d], 0.0);
        for (x, &y) in xs.iter().zip(ys) {
            let z: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - y as f64;
            for (g, xi) in gw.iter_mut().zip(x) {
                *g += err * xi;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g / n;
        }
        b -= lr * gb / n;
    }
    (w, b)
}

pub fn logistic_accuracy(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let right = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| {
            let z: f64 = x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            usize::from(z > 0.0) == y
        })
        .count();
    right as f64 / xs.len() as f64
}

/// Linear-interpolation quantile on an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

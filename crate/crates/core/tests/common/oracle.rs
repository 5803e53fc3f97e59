//! Brute-force reference implementations. Inputs are plain nested vectors
//! so nothing is shared with the library beyond the loss configuration.

pub const EPS: f64 = 1e-7;

pub fn clip(p: f64) -> f64 {
    if p < EPS {
        EPS
    } else if p > 1.0 - EPS {
        1.0 - EPS
    } else {
        p
    }
}

/// mean_b −Σ_c w_c [y log p + (1−y) log(1−p)]
pub fn weighted_bce(y: &[Vec<u8>], p: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for b in 0..y.len() {
        let mut row = 0.0;
        for c in 0..w.len() {
            let q = clip(p[b][c]);
            let t = y[b][c] as f64;
            row += w[c] * (t * q.ln() + (1.0 - t) * (1.0 - q).ln());
        }
        total += -row;
    }
    total / y.len() as f64
}

/// mean_b λ Σ_i Σ_j M_ij (p_bi − p_bj)²
pub fn correlation_penalty(p: &[Vec<f64>], m: &[Vec<f64>], lambda: f64) -> f64 {
    let mut total = 0.0;
    for row in p {
        let mut s = 0.0;
        for i in 0..m.len() {
            for j in 0..m.len() {
                let d = clip(row[i]) - clip(row[j]);
                s += m[i][j] * d * d;
            }
        }
        total += lambda * s;
    }
    total / p.len() as f64
}

/// (1/C) Σ_i Σ_j M_ij · mean_b (p_bi − y_bi)(p_bj − y_bj)
pub fn lcm_residual(y: &[Vec<u8>], p: &[Vec<f64>], m: &[Vec<f64>]) -> f64 {
    let c = m.len();
    let mut s = 0.0;
    for i in 0..c {
        for j in 0..c {
            let mut inner = 0.0;
            for b in 0..y.len() {
                inner += (clip(p[b][i]) - y[b][i] as f64) * (clip(p[b][j]) - y[b][j] as f64);
            }
            s += m[i][j] * inner / y.len() as f64;
        }
    }
    s / c as f64
}

pub fn share_any(a: &[u8], b: &[u8]) -> bool {
    a.iter().zip(b).any(|(x, y)| *x == 1 && *y == 1)
}

/// Mean over i<j of D (similar pairs) or max(0, m − D) (dissimilar pairs),
/// D the squared Euclidean distance.
pub fn contrastive(y: &[Vec<u8>], h: &[Vec<f64>], margin: f64, exact: bool) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = 0.0;
            for k in 0..h[i].len() {
                d += (h[i][k] - h[j][k]) * (h[i][k] - h[j][k]);
            }
            let similar = if exact { y[i] == y[j] } else { share_any(&y[i], &y[j]) };
            total += if similar { d } else { (margin - d).max(0.0) };
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// M = YᵀY / N
pub fn correlation_matrix(y: &[Vec<u8>]) -> Vec<Vec<f64>> {
    let c = y[0].len();
    let mut m = vec![vec![0.0; c]; c];
    for row in y {
        for i in 0..c {
            for j in 0..c {
                m[i][j] += (row[i] * row[j]) as f64;
            }
        }
    }
    for r in &mut m {
        for v in r {
            *v /= y.len() as f64;
        }
    }
    m
}

/// Per-class (tp, fp, fn) by direct comparison.
pub fn counts(t: &[Vec<u8>], p: &[Vec<u8>]) -> Vec<(f64, f64, f64)> {
    let c = t.first().map_or(0, |r| r.len());
    (0..c)
        .map(|k| {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for i in 0..t.len() {
                match (t[i][k], p[i][k]) {
                    (1, 1) => tp += 1.0,
                    (0, 1) => fp += 1.0,
                    (1, 0) => fn_ += 1.0,
                    _ => {}
                }
            }
            (tp, fp, fn_)
        })
        .collect()
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// (precision, recall, f1) from pooled counts.
pub fn micro(t: &[Vec<u8>], p: &[Vec<u8>]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (a, b, c) in counts(t, p) {
        tp += a;
        fp += b;
        fn_ += c;
    }
    let pr = ratio(tp, tp + fp);
    let rc = ratio(tp, tp + fn_);
    (pr, rc, ratio(2.0 * pr * rc, pr + rc))
}

pub fn macro_f1(t: &[Vec<u8>], p: &[Vec<u8>]) -> f64 {
    let per = counts(t, p);
    let mut s = 0.0;
    for &(tp, fp, fn_) in &per {
        let pr = ratio(tp, tp + fp);
        let rc = ratio(tp, tp + fn_);
        s += ratio(2.0 * pr * rc, pr + rc);
    }
    ratio(s, per.len() as f64)
}

pub fn jaccard(t: &[Vec<u8>], p: &[Vec<u8>]) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..t.len() {
        let (mut inter, mut union) = (0.0, 0.0);
        for k in 0..t[i].len() {
            if t[i][k] == 1 && p[i][k] == 1 {
                inter += 1.0;
            }
            if t[i][k] == 1 || p[i][k] == 1 {
                union += 1.0;
            }
        }
        s += if union == 0.0 { 1.0 } else { inter / union };
    }
    s / t.len() as f64
}

pub fn hamming(t: &[Vec<u8>], p: &[Vec<u8>]) -> f64 {
    let mut wrong = 0.0;
    let mut total = 0.0;
    for i in 0..t.len() {
        for k in 0..t[i].len() {
            if t[i][k] != p[i][k] {
                wrong += 1.0;
            }
            total += 1.0;
        }
    }
    ratio(wrong, total)
}

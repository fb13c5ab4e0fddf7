//! Reference implementations used only by tests. Each one is written from
//! the textbook definition, shares no code with the library, and favours
//! obviousness over speed.
#![allow(dead_code)]

/// Full sort under the documented ranking rule: descending score, then
/// ascending chunk position, then ascending patient id.
pub fn brute_top_k(
    vectors: &[Vec<f32>],
    keys: &[(String, u32)],
    query: &[f32],
    k: usize,
    patient: Option<&str>,
) -> Vec<((String, u32), f64)> {
    let mut scored: Vec<((String, u32), f64)> = Vec::new();
    for (v, key) in vectors.iter().zip(keys) {
        if patient.is_some_and(|p| p != key.0) {
            continue;
        }
        let mut s = 0.0f64;
        for i in 0..v.len() {
            s += f64::from(v[i]) * f64::from(query[i]);
        }
        scored.push((key.clone(), s));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0 .1.cmp(&b.0 .1)).then(a.0 .0.cmp(&b.0 .0)));
    scored.truncate(k);
    scored
}

/// Fraction of positive/negative pairs ranked correctly, ties counting one
/// half.
pub fn brute_auc(labels: &[u8], scores: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0u64;
    for i in 0..labels.len() {
        if labels[i] != 1 {
            continue;
        }
        for j in 0..labels.len() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                num += 1.0;
            } else if scores[i] == scores[j] {
                num += 0.5;
            }
        }
    }
    num / pairs as f64
}

/// Average precision from its threshold definition: for each positive,
/// precision among everything scored at or above it.
pub fn direct_ap(labels: &[u8], scores: &[f64]) -> f64 {
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut total = 0.0;
    for &i in &positives {
        let at_or_above: Vec<usize> = (0..labels.len()).filter(|&j| scores[j] >= scores[i]).collect();
        let tp = at_or_above.iter().filter(|&&j| labels[j] == 1).count();
        total += tp as f64 / at_or_above.len() as f64;
    }
    total / positives.len() as f64
}

/// Standard normal CDF from the Maclaurin series of erf (small |x|) and
/// the Laplace continued fraction for the upper tail (large |x|).
pub fn phi(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - phi(-x);
    }
    if x < 3.0 {
        // erf(z) = 2/sqrt(pi) * sum_n (-1)^n z^(2n+1) / (n! (2n+1))
        let z = x / std::f64::consts::SQRT_2;
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -z * z / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    } else {
        // Q(x) = pdf(x) / (x + 1/(x + 2/(x + 3/(x + ...))))
        let mut cf = x;
        for k in (1..=200).rev() {
            cf = x + k as f64 / cf;
        }
        let pdf = (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        1.0 - pdf / cf
    }
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && v[idx[j]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..j] {
            r[k] = 0.5 * (i + j - 1) as f64 + 1.0;
        }
        i = j;
    }
    r
}

/// DeLong test via the midrank formulation of the placement values
/// (Sun and Xu's fast algorithm). Returns (auc_a, auc_b, variance, p).
pub fn fast_delong(labels: &[u8], a: &[f64], b: &[f64]) -> (f64, f64, f64, f64) {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);

    let placements = |s: &[f64]| {
        let x: Vec<f64> = pos.iter().map(|&i| s[i]).collect();
        let y: Vec<f64> = neg.iter().map(|&i| s[i]).collect();
        let z: Vec<f64> = x.iter().chain(&y).copied().collect();
        let (tx, ty, tz) = (midranks(&x), midranks(&y), midranks(&z));
        let auc = (tz[..x.len()].iter().sum::<f64>() - m * (m + 1.0) / 2.0) / (m * n);
        let v10: Vec<f64> = (0..x.len()).map(|i| (tz[i] - tx[i]) / n).collect();
        let v01: Vec<f64> = (0..y.len()).map(|j| 1.0 - (tz[x.len() + j] - ty[j]) / m).collect();
        (auc, v10, v01)
    };
    let (auc_a, a10, a01) = placements(a);
    let (auc_b, b10, b01) = placements(b);

    fn cov(u: &[f64], v: &[f64]) -> f64 {
        let mu = u.iter().sum::<f64>() / u.len() as f64;
        let mv = v.iter().sum::<f64>() / v.len() as f64;
        u.iter().zip(v).map(|(p, q)| (p - mu) * (q - mv)).sum::<f64>() / (u.len() as f64 - 1.0)
    }
    let s10 = cov(&a10, &a10) + cov(&b10, &b10) - 2.0 * cov(&a10, &b10);
    let s01 = cov(&a01, &a01) + cov(&b01, &b01) - 2.0 * cov(&a01, &b01);
    let var = s10 / m + s01 / n;
    let diff = auc_a - auc_b;
    let p = if var <= 0.0 {
        if diff == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        2.0 * (1.0 - phi((diff / var.sqrt()).abs()))
    };
    (auc_a, auc_b, var, p)
}

/// AUC with integer multiplicities per patient, in one sweep over the
/// patients sorted by score (`order`). Tied groups count one half per pair.
pub fn weighted_auc(order: &[usize], labels: &[u8], scores: &[f64], weight: &[u32]) -> f64 {
    let (mut neg_below, mut num) = (0.0f64, 0.0f64);
    let (mut wp, mut wn) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0.0, 0.0);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            let k = order[j];
            if labels[k] == 1 {
                gp += f64::from(weight[k]);
            } else {
                gn += f64::from(weight[k]);
            }
            j += 1;
        }
        num += gp * (neg_below + 0.5 * gn);
        neg_below += gn;
        wp += gp;
        wn += gn;
        i = j;
    }
    num / (wp * wn)
}

/// Two-sided p-value for AUC(a) = AUC(b) from a paired bootstrap that
/// resamples positives and negatives separately, using the bootstrap
/// standard error of the difference.
pub fn bootstrap_p(labels: &[u8], a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let sorted = |s: &[f64]| {
        let mut o: Vec<usize> = (0..s.len()).collect();
        o.sort_by(|&x, &y| s[x].partial_cmp(&s[y]).unwrap());
        o
    };
    let (oa, ob) = (sorted(a), sorted(b));
    let ones = vec![1u32; labels.len()];
    let observed = weighted_auc(&oa, labels, a, &ones) - weighted_auc(&ob, labels, b, &ones);

    let mut diffs = Vec::with_capacity(resamples);
    let mut w = vec![0u32; labels.len()];
    for _ in 0..resamples {
        w.iter_mut().for_each(|x| *x = 0);
        for group in [&pos, &neg] {
            for _ in 0..group.len() {
                w[group[rng.random_range(0..group.len())]] += 1;
            }
        }
        diffs.push(weighted_auc(&oa, labels, a, &w) - weighted_auc(&ob, labels, b, &w));
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        return if observed == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * (1.0 - phi((observed / sd).abs()))
}

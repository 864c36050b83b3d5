#![allow(dead_code)]

/// Two-sided signed-rank p-value by visiting every sign assignment.
/// Ranks are computed by pairwise counting, independently of the library.
pub fn brute_force_wilcoxon(d: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = d.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    let rank = |i: usize| -> f64 {
        let a = d[i].abs();
        let below = d.iter().filter(|x| x.abs() < a).count() as f64;
        let equal = d.iter().filter(|x| x.abs() == a).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = (0..n).map(rank).collect();
    let w: f64 = (0..n).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let (mut lo, mut hi) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s <= w {
            lo += 1;
        }
        if s >= w {
            hi += 1;
        }
    }
    let p = (2.0 * lo.min(hi) as f64 / (1u64 << n) as f64).min(1.0);
    (w, p)
}

use lexpredict::evaluation::kendall_tau_b;

fn brute_force(x: &[u32], y: &[u32]) -> Option<f64> {
    let n = x.len();
    let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].cmp(&x[j]);
            let dy = y[i].cmp(&y[j]);
            if dx.is_eq() {
                tx += 1;
            }
            if dy.is_eq() {
                ty += 1;
            }
            if dx.is_ne() && dy.is_ne() {
                if dx == dy {
                    c += 1;
                } else {
                    d += 1;
                }
            }
        }
    }
    let p = (n * n.saturating_sub(1) / 2) as i64;
    if n < 2 || p == tx || p == ty {
        return None;
    }
    Some((c - d) as f64 / (((p - tx) * (p - ty)) as f64).sqrt())
}

/// Every weak ordering of n items as dense ranks (each rank 0..k used).
fn weak_orderings(n: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    fn rec(i: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i == cur.len() {
            let k = cur.iter().max().map_or(0, |m| m + 1);
            if (0..k).all(|r| cur.contains(&r)) {
                out.push(cur.clone());
            }
            return;
        }
        for r in 0..cur.len() as u32 {
            cur[i] = r;
            rec(i + 1, cur, out);
        }
    }
    rec(0, &mut cur, &mut out);
    out
}

/// Non-decreasing tie patterns: one representative per weak ordering up to
/// a relabelling of the items.
fn sorted_patterns(n: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = weak_orderings(n).into_iter().filter(|v| v.windows(2).all(|w| w[0] <= w[1])).collect();
    out.dedup();
    out
}

#[test]
fn matches_pair_counting_up_to_six_items() {
    let fubini = [1usize, 1, 3, 13, 75, 541, 4683];
    for (n, &count) in fubini.iter().enumerate() {
        let ys = weak_orderings(n);
        assert_eq!(ys.len(), count);
        let xs = sorted_patterns(n);
        assert_eq!(xs.len(), 1 << n.saturating_sub(1));
        for x in &xs {
            for y in &ys {
                let expected = brute_force(x, y);
                let fast: Option<f64> = kendall_tau_b(x, y).unwrap();
                assert_eq!(fast, expected, "x={x:?} y={y:?}");
                let probs: Vec<f64> = y.iter().map(|&r| 0.05 * f64::from(r + 1)).collect();
                let fast: Option<f64> = kendall_tau_b(x, &probs).unwrap();
                assert_eq!(fast, expected, "x={x:?} probs={probs:?}");
            }
        }
    }
}

#[test]
fn arbitrary_item_order_up_to_four_items() {
    for n in 0..=4 {
        let all = weak_orderings(n);
        for x in &all {
            for y in &all {
                let fast: Option<f64> = kendall_tau_b(x, y).unwrap();
                assert_eq!(fast, brute_force(x, y), "x={x:?} y={y:?}");
            }
        }
    }
}

//! Largest-remainder (Hamilton) apportionment of an integer total.

/// Splits `total` into integers proportional to `weights`, summing exactly
/// to `total`.
///
/// Each part gets the floor of its exact quota; the leftover units go one
/// each to the largest fractional remainders. Equal remainders favour the
/// lower index. If every weight is zero the result is all zeros.
pub fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    let weight_sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if weight_sum == 0 {
        return vec![0; weights.len()];
    }

    let mut parts = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for &w in weights {
        let scaled = u128::from(total) * u128::from(w);
        // quota <= total, so the narrowing cannot truncate.
        parts.push((scaled / weight_sum) as u64);
        remainders.push(scaled % weight_sum);
    }

    let assigned: u64 = parts.iter().sum();
    let leftover = (total - assigned) as usize;
    if leftover > 0 {
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
        for &i in order.iter().take(leftover) {
            parts[i] += 1;
        }
    }
    parts
}

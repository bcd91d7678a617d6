//! Split sizes in exact integer arithmetic.

/// `round(n · num/den)` with halves rounded away from zero, for
/// non-negative values: `⌊(2·n·num + den) / (2·den)⌋`.
pub fn round_half_away(n: u64, num: u64, den: u64) -> u64 {
    (2 * n * num + den) / (2 * den)
}

/// `(train, val, test)` for a class of `n` with fractions given as
/// thousandths (0.175 → 175, 0.075 → 75).
pub fn split_sizes_exact(n: u64, val_thousandths: u64, test_thousandths: u64) -> (u64, u64, u64) {
    let val = round_half_away(n, val_thousandths, 1000);
    let test = round_half_away(n, test_thousandths, 1000);
    (n - val - test, val, test)
}

//! Distance primitives shared by the interpreter and the fitness layer.

use num_traits::Float;

/// Normalizes a non-negative distance into `[0, 1)`: `x / (x + 1)`.
///
/// Infinite distances (unreached targets) map to exactly `1`.
pub fn nu<F: Float>(x: F) -> F {
    if x.is_infinite() {
        F::one()
    } else {
        x / (x + F::one())
    }
}

/// Levenshtein edit distance over Unicode scalar values.
///
/// Single-row dynamic programming; insertion, deletion and substitution all
/// cost one.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }

    let mut row: Vec<usize> = (0..=short.len()).collect();
    for (j, lc) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = j + 1;
        for (i, sc) in short.iter().enumerate() {
            let above = row[i + 1];
            let substitute = diag + usize::from(sc != lc);
            row[i + 1] = substitute.min(above + 1).min(row[i] + 1);
            diag = above;
        }
    }
    row[short.len()]
}

//! Exact rational linear algebra over small integer matrices.
//!
//! Ranks, null spaces and the positivity LP are computed with arbitrary
//! precision so that integer invariants (rank, deficiency) never depend on
//! floating-point pivoting.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

fn rat(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Rank by fraction-free (Bareiss) elimination.
pub fn rank(rows: &[Vec<i64>]) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<BigInt>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| BigInt::from(v)).collect())
        .collect();
    let (nr, nc) = (m.len(), m[0].len());
    let mut prev = BigInt::one();
    let mut r = 0;
    for c in 0..nc {
        if r == nr {
            break;
        }
        let Some(p) = (r..nr).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        for i in r + 1..nr {
            for j in c + 1..nc {
                let v = (&m[r][c] * &m[i][j] - &m[i][c] * &m[r][j]) / &prev;
                m[i][j] = v;
            }
            m[i][c] = BigInt::zero();
        }
        prev = m[r][c].clone();
        r += 1;
    }
    r
}

/// Reduced row echelon form; returns the pivot columns.
pub fn rref(m: &mut [Vec<Rational>]) -> Vec<usize> {
    let nr = m.len();
    if nr == 0 {
        return Vec::new();
    }
    let nc = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..nc {
        if r == nr {
            break;
        }
        let Some(p) = (r..nr).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][c].recip();
        for v in m[r].iter_mut() {
            *v = &*v * &inv;
        }
        for i in 0..nr {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..nc {
                    let d = &f * &m[r][j];
                    m[i][j] -= d;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Basis of the right null space `{v : A v = 0}`, one vector per free column.
pub fn null_space(rows: &[Vec<i64>], ncols: usize) -> Vec<Vec<Rational>> {
    let mut m: Vec<Vec<Rational>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| rat(v)).collect())
        .collect();
    let pivots = rref(&mut m);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Rational::zero(); ncols];
            v[f] = Rational::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][f].clone();
            }
            v
        })
        .collect()
}

/// Indices of a maximal set of linearly independent columns.
pub fn independent_columns(rows: &[Vec<i64>]) -> Vec<usize> {
    let mut m: Vec<Vec<Rational>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| rat(v)).collect())
        .collect();
    rref(&mut m)
}

/// Scales a rational vector to the primitive integer vector with the same direction.
pub fn primitive_integer(v: &[Rational]) -> Vec<BigInt> {
    use num_integer::Integer;
    let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| (x * &lcm).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

/// Finds `x >= 0` with `A x = b`, or `None` if infeasible.
///
/// Phase-one simplex on an exact tableau with Bland's rule, so it terminates
/// even on degenerate problems.
pub fn nonneg_solution(a: &[Vec<Rational>], b: &[Rational], nvars: usize) -> Option<Vec<Rational>> {
    let m = a.len();
    if m == 0 {
        return Some(vec![Rational::zero(); nvars]);
    }
    // Columns: structural 0..nvars, artificial nvars..nvars+m, then rhs.
    let width = nvars + m + 1;
    let mut t: Vec<Vec<Rational>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let flip = b[i].is_negative();
        let mut row = vec![Rational::zero(); width];
        for j in 0..nvars {
            row[j] = if flip {
                -a[i][j].clone()
            } else {
                a[i][j].clone()
            };
        }
        row[nvars + i] = Rational::one();
        row[width - 1] = if flip { -b[i].clone() } else { b[i].clone() };
        t.push(row);
    }
    // Reduced costs of "minimize sum of artificials".
    let mut cost = vec![Rational::zero(); width];
    for row in &t {
        for j in 0..nvars {
            cost[j] -= &row[j];
        }
        cost[width - 1] -= &row[width - 1];
    }
    t.push(cost);
    let mut basis: Vec<usize> = (nvars..nvars + m).collect();

    loop {
        let obj = &t[m];
        let Some(enter) = (0..nvars + m).find(|&j| obj[j].is_negative()) else {
            break;
        };
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if t[i][enter].is_positive() {
                let ratio = &t[i][width - 1] / &t[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // Phase one is bounded below by zero, so an unbounded ray cannot occur.
        let (pr, _) = leave?;
        pivot(&mut t, pr, enter);
        basis[pr] = enter;
    }

    if !t[m][width - 1].is_zero() {
        return None;
    }
    let mut x = vec![Rational::zero(); nvars];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < nvars {
            x[bv] = t[i][width - 1].clone();
        }
    }
    Some(x)
}

fn pivot(t: &mut [Vec<Rational>], pr: usize, pc: usize) {
    let inv = t[pr][pc].recip();
    for v in t[pr].iter_mut() {
        *v = &*v * &inv;
    }
    let prow = t[pr].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != pr && !row[pc].is_zero() {
            let f = row[pc].clone();
            for (v, p) in row.iter_mut().zip(prow.iter()) {
                *v -= &f * p;
            }
        }
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_small_matrices() {
        assert_eq!(rank(&[vec![1, 2], vec![2, 4]]), 1);
        assert_eq!(rank(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]), 3);
        assert_eq!(rank(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(rank(&[]), 0);
    }

    #[test]
    fn null_space_is_annihilated() {
        let a = vec![vec![1, 1, 0, -1], vec![0, 1, 1, 2]];
        let ns = null_space(&a, 4);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            for row in &a {
                let s: Rational = row.iter().zip(v).map(|(&x, y)| rat(x) * y).sum();
                assert!(s.is_zero());
            }
        }
    }

    #[test]
    fn lp_feasible_and_infeasible() {
        // x + y = 2, x - y = 0 -> (1, 1)
        let a = vec![vec![rat(1), rat(1)], vec![rat(1), rat(-1)]];
        let x = nonneg_solution(&a, &[rat(2), rat(0)], 2).unwrap();
        assert_eq!(x, vec![rat(1), rat(1)]);
        // x + y = -1 has no nonnegative solution
        let a = vec![vec![rat(1), rat(1)]];
        assert!(nonneg_solution(&a, &[rat(-1)], 2).is_none());
    }

    #[test]
    fn primitive_vector() {
        let v = vec![
            Rational::new(2.into(), 3.into()),
            Rational::new(4.into(), 3.into()),
        ];
        assert_eq!(
            primitive_integer(&v),
            vec![BigInt::from(1), BigInt::from(2)]
        );
    }
}

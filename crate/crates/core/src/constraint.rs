//! Constraint finite-state machines and their Shannon capacity.
//!
//! A constraint is described by a labelled graph over states. The capacity is
//! `log2` of the spectral radius of the adjacency matrix, and the number of
//! admissible sequences of length `m` grows like `2^(C·m)`.

use num_bigint::BigUint;
use serde::Serialize;

use crate::error::{Error, Result};

pub const POWER_ITERATION_TOL: f64 = 1e-10;
pub const POWER_ITERATION_CAP: usize = 100_000;

/// One labelled edge of a constraint graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub bit: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConstraintFsm {
    num_states: usize,
    transitions: Vec<Transition>,
    start_state: usize,
}

impl ConstraintFsm {
    pub fn new(num_states: usize, transitions: Vec<Transition>, start_state: usize) -> Result<Self> {
        if num_states == 0 {
            return Err(Error::TooFewStates(0));
        }
        let check = |state: usize| {
            if state < num_states {
                Ok(())
            } else {
                Err(Error::StateOutOfRange { state, num_states })
            }
        };
        check(start_state)?;
        for t in &transitions {
            check(t.from)?;
            check(t.to)?;
            if t.bit > 1 {
                return Err(Error::InvalidBit(t.bit));
            }
        }
        Ok(Self {
            num_states,
            transitions,
            start_state,
        })
    }

    /// Builds the running-digital-sum walk over `num_rds_values` states.
    ///
    /// State `i` is the `i`-th lowest RDS value. Emitting a one moves up a
    /// state and emitting a zero moves down; the walk never leaves the range,
    /// so the graph is a path. The start state is the middle of the range.
    pub fn dc_free(num_rds_values: usize) -> Result<Self> {
        if num_rds_values < 2 {
            return Err(Error::TooFewStates(num_rds_values));
        }
        let mut transitions = Vec::with_capacity(2 * (num_rds_values - 1));
        for state in 0..num_rds_values {
            if state + 1 < num_rds_values {
                transitions.push(Transition {
                    from: state,
                    to: state + 1,
                    bit: 1,
                });
            }
            if state > 0 {
                transitions.push(Transition {
                    from: state,
                    to: state - 1,
                    bit: 0,
                });
            }
        }
        Self::new(num_rds_values, transitions, num_rds_values / 2)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    pub fn with_start_state(mut self, start_state: usize) -> Result<Self> {
        if start_state >= self.num_states {
            return Err(Error::StateOutOfRange {
                state: start_state,
                num_states: self.num_states,
            });
        }
        self.start_state = start_state;
        Ok(self)
    }

    /// `D[i][j]` counts the edges from state `i` to state `j`.
    pub fn adjacency(&self) -> Vec<Vec<u64>> {
        let mut d = vec![vec![0u64; self.num_states]; self.num_states];
        for t in &self.transitions {
            d[t.from][t.to] += 1;
        }
        d
    }

    /// Renames state `i` to `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.num_states];
        if perm.len() != self.num_states {
            return Err(Error::LengthMismatch {
                expected: self.num_states,
                actual: perm.len(),
            });
        }
        for &p in perm {
            if p >= self.num_states || seen[p] {
                return Err(Error::StateOutOfRange {
                    state: p,
                    num_states: self.num_states,
                });
            }
            seen[p] = true;
        }
        let transitions = self
            .transitions
            .iter()
            .map(|t| Transition {
                from: perm[t.from],
                to: perm[t.to],
                bit: t.bit,
            })
            .collect();
        Self::new(self.num_states, transitions, perm[self.start_state])
    }

    fn is_strongly_connected(&self) -> bool {
        let reach = |forward: bool| {
            let mut seen = vec![false; self.num_states];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(s) = stack.pop() {
                for t in &self.transitions {
                    let (a, b) = if forward { (t.from, t.to) } else { (t.to, t.from) };
                    if a == s && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            seen.into_iter().all(|x| x)
        };
        reach(true) && reach(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityResult {
    pub lambda_max: f64,
    /// Bits per symbol.
    pub capacity: f64,
}

/// Spectral radius of the adjacency matrix and the resulting capacity.
///
/// Power iteration runs on `D + I`, which is primitive whenever `D` is
/// irreducible, so periodic graphs (the DC-free path is bipartite) still
/// converge. Iteration stops once the Collatz–Wielandt bounds
/// `min_i (Ax)_i/x_i ≤ ρ ≤ max_i (Ax)_i/x_i` are within tolerance.
pub fn capacity(fsm: &ConstraintFsm) -> Result<CapacityResult> {
    if !fsm.is_strongly_connected() {
        return Err(Error::NotIrreducible);
    }
    let d = fsm.adjacency();
    let n = fsm.num_states();
    let mut x = vec![1.0f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..POWER_ITERATION_CAP {
        for i in 0..n {
            next[i] = x[i] + d[i].iter().zip(&x).map(|(&a, &xj)| a as f64 * xj).sum::<f64>();
        }
        let (lo, hi) = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a / b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        if hi - lo < POWER_ITERATION_TOL {
            let lambda_max = 0.5 * (lo + hi) - 1.0;
            return Ok(CapacityResult {
                lambda_max,
                capacity: lambda_max.log2(),
            });
        }
        let norm = next.iter().cloned().fold(0.0, f64::max);
        for (xi, ni) in x.iter_mut().zip(&next) {
            *xi = ni / norm;
        }
    }
    Err(Error::NoConvergence(POWER_ITERATION_CAP))
}

/// Number of admissible sequences of `length` symbols leaving the start state.
pub fn count_sequences(fsm: &ConstraintFsm, length: usize) -> BigUint {
    let mut counts = vec![BigUint::from(0u32); fsm.num_states()];
    counts[fsm.start_state()] = BigUint::from(1u32);
    for _ in 0..length {
        let mut next = vec![BigUint::from(0u32); fsm.num_states()];
        for t in fsm.transitions() {
            next[t.to] += &counts[t.from];
        }
        counts = next;
    }
    counts.into_iter().sum()
}

/// `log2` of [`count_sequences`], accurate for counts far beyond `f64` range.
pub fn log2_count_sequences(fsm: &ConstraintFsm, length: usize) -> f64 {
    let count = count_sequences(fsm, length);
    let bits = count.bits();
    if bits <= 64 {
        return (count.to_u64_digits().first().copied().unwrap_or(0) as f64).log2();
    }
    let shift = bits - 64;
    let top = &count >> shift;
    (top.to_u64_digits()[0] as f64).log2() + shift as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEntry {
    pub k: usize,
    pub n: usize,
    pub rate: f64,
    pub efficiency: f64,
}

/// The highest fixed-length code rate `k/n ≤ C` for each `k` in `1..=max_k`.
///
/// `n` is chosen against the exact capacity. Efficiency is reported against
/// the capacity quoted to four decimals, which is how published tables for
/// these constraints are tabulated (e.g. `C = 0.7925` for five RDS values).
pub fn rate_table(fsm: &ConstraintFsm, max_k: usize) -> Result<Vec<RateEntry>> {
    let cap = capacity(fsm)?.capacity;
    if cap <= 0.0 {
        return Err(Error::ZeroCapacity);
    }
    let quoted = (cap * 1e4).round() / 1e4;
    Ok((1..=max_k)
        .map(|k| {
            let mut n = (k as f64 / cap).ceil() as usize;
            while k as f64 / n as f64 > cap {
                n += 1;
            }
            while n > k && k as f64 / (n - 1) as f64 <= cap {
                n -= 1;
            }
            let rate = k as f64 / n as f64;
            RateEntry {
                k,
                n,
                rate,
                efficiency: rate / quoted,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dc_free_adjacency_is_tridiagonal() {
        let d = ConstraintFsm::dc_free(5).unwrap().adjacency();
        for (i, row) in d.iter().enumerate() {
            for (j, &entry) in row.iter().enumerate() {
                assert_eq!(entry, u64::from(i.abs_diff(j) == 1), "D[{i}][{j}]");
            }
        }
        assert_eq!(ConstraintFsm::dc_free(2).unwrap().adjacency(), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(
            ConstraintFsm::dc_free(3).unwrap().adjacency(),
            vec![vec![0, 1, 0], vec![1, 0, 1], vec![0, 1, 0]]
        );
    }

    #[test]
    fn dc_free_rejects_single_state() {
        assert!(matches!(ConstraintFsm::dc_free(1), Err(Error::TooFewStates(1))));
        assert!(matches!(ConstraintFsm::dc_free(0), Err(Error::TooFewStates(0))));
    }

    #[test]
    fn dc_free_bits_move_rds() {
        let fsm = ConstraintFsm::dc_free(6).unwrap();
        for t in fsm.transitions() {
            match t.bit {
                1 => assert_eq!(t.to, t.from + 1),
                0 => assert_eq!(t.to + 1, t.from),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn capacity_small_cases() {
        let five = capacity(&ConstraintFsm::dc_free(5).unwrap()).unwrap();
        assert!((five.capacity - 0.7925).abs() < 5e-5);
        let two = capacity(&ConstraintFsm::dc_free(2).unwrap()).unwrap();
        assert!((two.lambda_max - 1.0).abs() < 1e-10);
        assert!(two.capacity.abs() < 1e-10);
        let three = capacity(&ConstraintFsm::dc_free(3).unwrap()).unwrap();
        assert!((three.lambda_max - 2f64.sqrt()).abs() < 1e-10);
        assert!((three.capacity - 0.5).abs() < 1e-10);
    }

    #[test]
    fn capacity_matches_path_graph_closed_form() {
        for n in 2..=50usize {
            let got = capacity(&ConstraintFsm::dc_free(n).unwrap()).unwrap().lambda_max;
            let closed = 2.0 * (std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert!((got - closed).abs() < 1e-9, "N={n}: {got} vs {closed}");
        }
    }

    #[test]
    fn capacity_rejects_reducible_graph() {
        let fsm = ConstraintFsm::new(
            2,
            vec![
                Transition { from: 0, to: 0, bit: 0 },
                Transition { from: 0, to: 1, bit: 1 },
                Transition { from: 1, to: 1, bit: 1 },
            ],
            0,
        )
        .unwrap();
        assert!(matches!(capacity(&fsm), Err(Error::NotIrreducible)));
    }

    #[test]
    fn counts_from_center() {
        let fsm = ConstraintFsm::dc_free(5).unwrap();
        assert_eq!(count_sequences(&fsm, 1), BigUint::from(2u32));
        // 11, 10, 01, 00 all stay within two steps of the center.
        assert_eq!(count_sequences(&fsm, 2), BigUint::from(4u32));
        // From the center, length 3 loses 111 and 000.
        assert_eq!(count_sequences(&fsm, 3), BigUint::from(6u32));
        let rate = log2_count_sequences(&fsm, 60) / 60.0;
        assert!((rate - 0.7925).abs() < 0.02, "{rate}");
    }

    #[test]
    fn counts_converge_to_capacity() {
        let fsm = ConstraintFsm::dc_free(5).unwrap();
        let cap = capacity(&fsm).unwrap().capacity;
        for m in [40, 80, 120, 200] {
            let rate = log2_count_sequences(&fsm, m) / m as f64;
            assert!((rate - cap).abs() < 0.05, "m={m}: {rate}");
        }
    }

    #[test]
    fn log2_count_handles_huge_counts() {
        let fsm = ConstraintFsm::dc_free(5).unwrap();
        let exact = count_sequences(&fsm, 20);
        let small: u64 = exact.to_u64_digits()[0];
        assert!((log2_count_sequences(&fsm, 20) - (small as f64).log2()).abs() < 1e-12);
        assert!(log2_count_sequences(&fsm, 1000).is_finite());
    }

    #[test]
    fn rate_table_rows() {
        let table = rate_table(&ConstraintFsm::dc_free(5).unwrap(), 79).unwrap();
        let row = |k: usize| table[k - 1];
        assert_eq!(row(1).n, 2);
        assert_eq!(format!("{:.2}", 100.0 * row(1).efficiency), "63.09");
        assert_eq!(row(19).n, 24);
        assert_eq!(format!("{:.4}", row(19).rate), "0.7917");
        assert_eq!(format!("{:.2}", 100.0 * row(19).efficiency), "99.89");
        assert_eq!(row(79).n, 100);
        assert_eq!(format!("{:.2}", 100.0 * row(79).efficiency), "99.68");
    }

    #[test]
    fn rate_table_minimality() {
        let fsm = ConstraintFsm::dc_free(5).unwrap();
        let cap = capacity(&fsm).unwrap().capacity;
        for e in rate_table(&fsm, 200).unwrap() {
            assert!(e.rate <= cap);
            assert!(e.k as f64 / (e.n - 1) as f64 > cap, "k={} n={}", e.k, e.n);
        }
    }

    #[test]
    fn rate_table_needs_positive_capacity() {
        assert!(matches!(
            rate_table(&ConstraintFsm::dc_free(2).unwrap(), 3),
            Err(Error::ZeroCapacity)
        ));
    }

    proptest! {
        #[test]
        fn capacity_invariant_under_relabeling(
            (n, perm) in (2usize..12).prop_flat_map(|n| {
                (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
            })
        ) {
            let fsm = ConstraintFsm::dc_free(n).unwrap();
            let relabeled = fsm.relabel(&perm).unwrap();
            let a = capacity(&fsm).unwrap().lambda_max;
            let b = capacity(&relabeled).unwrap().lambda_max;
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert_eq!(count_sequences(&fsm, 17), count_sequences(&relabeled, 17));
        }
    }
}

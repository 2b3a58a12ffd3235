use super::GateMatrix;
use crate::error::{Result, TrackError};
use crate::models::DaVectorTarget;

/// Default limit on the number of enumerated joint association events.
pub const DEFAULT_EVENT_CAP: usize = 1_000_000;

/// All valid target-oriented association vectors compatible with the gate,
/// in lexicographic order (the all-miss vector first).
pub fn enumerate_joint_events(gm: &GateMatrix, cap: usize) -> Result<Vec<DaVectorTarget>> {
    let options: Vec<Vec<usize>> = (0..gm.rows())
        .map(|j| std::iter::once(0).chain(gm.gated(j).map(|m| m + 1)).collect())
        .collect();
    let mut out = Vec::new();
    let mut current = vec![0; gm.rows()];
    let mut used = vec![false; gm.cols() + 1];
    walk(&options, 0, &mut current, &mut used, &mut |a| {
        if out.len() >= cap {
            return Err(TrackError::EventCapExceeded { cap });
        }
        out.push(DaVectorTarget(a.to_vec()));
        Ok(())
    })?;
    Ok(out)
}

/// Depth-first walk over valid association vectors. `options[j]` lists the
/// admissible one-based measurement indices of row `j` (0 = miss).
pub(crate) fn walk<F>(
    options: &[Vec<usize>],
    depth: usize,
    current: &mut [usize],
    used: &mut [bool],
    visit: &mut F,
) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    if depth == options.len() {
        return visit(current);
    }
    for &m in &options[depth] {
        if m != 0 && used[m] {
            continue;
        }
        if m != 0 {
            used[m] = true;
        }
        current[depth] = m;
        let r = walk(options, depth + 1, current, used, visit);
        if m != 0 {
            used[m] = false;
        }
        r?;
    }
    current[depth] = 0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn small_enumerations() {
        let one = enumerate_joint_events(&GateMatrix::full(1, 1), DEFAULT_EVENT_CAP).unwrap();
        assert_eq!(one, vec![DaVectorTarget(vec![0]), DaVectorTarget(vec![1])]);

        let full = enumerate_joint_events(&GateMatrix::full(2, 2), DEFAULT_EVENT_CAP).unwrap();
        assert_eq!(full.len(), 7);

        let diag = GateMatrix::from_rows(&[vec![true, false], vec![false, true]]);
        assert_eq!(enumerate_joint_events(&diag, DEFAULT_EVENT_CAP).unwrap().len(), 4);

        let none = enumerate_joint_events(&GateMatrix::new(0, 3), DEFAULT_EVENT_CAP).unwrap();
        assert_eq!(none, vec![DaVectorTarget(vec![])]);
    }

    #[test]
    fn cap_is_enforced() {
        let err = enumerate_joint_events(&GateMatrix::full(3, 3), 5).unwrap_err();
        assert_eq!(err, TrackError::EventCapExceeded { cap: 5 });
    }

    #[test]
    fn events_are_valid_and_unique_against_brute_force() {
        // Brute force: every vector in {0..m}^j, filtered by gate and validity.
        for (rows, cols, seed) in [(3usize, 3usize, 1u64), (2, 4, 7), (3, 2, 11), (4, 4, 3)] {
            let mut s = seed;
            let gm = GateMatrix::from_rows(
                &(0..rows)
                    .map(|_| {
                        (0..cols)
                            .map(|_| {
                                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                                (s >> 33) % 3 != 0
                            })
                            .collect()
                    })
                    .collect::<Vec<_>>(),
            );
            let events = enumerate_joint_events(&gm, DEFAULT_EVENT_CAP).unwrap();
            let set: HashSet<_> = events.iter().cloned().collect();
            assert_eq!(set.len(), events.len());
            let mut brute = 0;
            let total = (cols + 1).pow(rows as u32);
            for code in 0..total {
                let mut c = code;
                let a: Vec<usize> = (0..rows)
                    .map(|_| {
                        let v = c % (cols + 1);
                        c /= cols + 1;
                        v
                    })
                    .collect();
                let gated = a.iter().enumerate().all(|(j, &m)| m == 0 || gm.get(j, m - 1));
                let v = DaVectorTarget(a);
                if gated && v.is_valid(cols) {
                    brute += 1;
                    assert!(set.contains(&v));
                }
            }
            assert_eq!(brute, events.len());
        }
    }
}

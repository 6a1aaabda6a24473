//! Invariance group of block scoring functions and the search filter.
//!
//! Two grids describe the same trainable model when one arises from the
//! other by simultaneously permuting entity chunks on rows and columns,
//! relabeling relation chunks, or flipping the sign of a relation chunk:
//! 24 * 24 * 16 = 9,216 transformations. Canonical forms pick the
//! lexicographically smallest orbit member so equivalent candidates can be
//! deduplicated by equality.

use std::collections::HashSet;

use crate::blm::{BlockSF, CHUNKS};

/// All 24 permutations of `{0,1,2,3}`, lexicographic.
fn permutations() -> &'static [[usize; CHUNKS]; 24] {
    static PERMS: std::sync::OnceLock<[[usize; CHUNKS]; 24]> = std::sync::OnceLock::new();
    PERMS.get_or_init(|| {
        let mut out = [[0usize; CHUNKS]; 24];
        let mut n = 0;
        for a in 0..CHUNKS {
            for b in 0..CHUNKS {
                for c in 0..CHUNKS {
                    for d in 0..CHUNKS {
                        if a != b && a != c && a != d && b != c && b != d && c != d {
                            out[n] = [a, b, c, d];
                            n += 1;
                        }
                    }
                }
            }
        }
        out
    })
}

/// One invariance transformation.
///
/// `entity_perm` moves block `(i, j)` to `(entity_perm[i], entity_perm[j])`,
/// `relation_perm` relabels chunk `k` to `relation_perm[k]`, and
/// `sign_flips[k]` negates every cell whose original label is `k`
/// (0-based everywhere).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupElement {
    pub entity_perm: [usize; CHUNKS],
    pub relation_perm: [usize; CHUNKS],
    pub sign_flips: [bool; CHUNKS],
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement {
            entity_perm: [0, 1, 2, 3],
            relation_perm: [0, 1, 2, 3],
            sign_flips: [false; CHUNKS],
        }
    }

    /// The transformation undoing `self`.
    pub fn inverse(&self) -> Self {
        let mut entity_perm = [0usize; CHUNKS];
        let mut relation_perm = [0usize; CHUNKS];
        let mut sign_flips = [false; CHUNKS];
        for i in 0..CHUNKS {
            entity_perm[self.entity_perm[i]] = i;
            relation_perm[self.relation_perm[i]] = i;
        }
        for k in 0..CHUNKS {
            sign_flips[self.relation_perm[k]] = self.sign_flips[k];
        }
        GroupElement {
            entity_perm,
            relation_perm,
            sign_flips,
        }
    }
}

/// Enumerate all 9,216 group elements.
pub fn group_elements() -> impl Iterator<Item = GroupElement> {
    permutations().iter().flat_map(|&entity_perm| {
        permutations().iter().flat_map(move |&relation_perm| {
            (0u8..16).map(move |mask| GroupElement {
                entity_perm,
                relation_perm,
                sign_flips: [
                    mask & 1 != 0,
                    mask & 2 != 0,
                    mask & 4 != 0,
                    mask & 8 != 0,
                ],
            })
        })
    })
}

/// Apply a transformation to a grid.
pub fn apply(elem: &GroupElement, sf: &BlockSF) -> BlockSF {
    let mut cells = [[0i8; CHUNKS]; CHUNKS];
    for (i, j, c) in sf.nonzero_cells() {
        let k = c.unsigned_abs() as usize - 1;
        let mut value = (elem.relation_perm[k] + 1) as i8 * c.signum();
        if elem.sign_flips[k] {
            value = -value;
        }
        cells[elem.entity_perm[i]][elem.entity_perm[j]] = value;
    }
    BlockSF::from_cells(cells).expect("transformed labels stay in range")
}

/// Does the grid define a trainable model: no zero block-row or block-column,
/// all four relation chunks used, and no block-row (or block-column) equal to
/// another or to another's negation.
///
/// A row equal to the negation of another makes `g(r)` rank-deficient for
/// every `r`, so it is treated the same as a repeat.
pub fn check_c2(sf: &BlockSF) -> bool {
    let mut row_used = [false; CHUNKS];
    let mut col_used = [false; CHUNKS];
    let mut label_used = [false; CHUNKS];
    for (i, j, c) in sf.nonzero_cells() {
        row_used[i] = true;
        col_used[j] = true;
        label_used[c.unsigned_abs() as usize - 1] = true;
    }
    if row_used != [true; CHUNKS] || col_used != [true; CHUNKS] || label_used != [true; CHUNKS] {
        return false;
    }

    let row = |i: usize| -> [i8; CHUNKS] { std::array::from_fn(|j| sf.get(i, j)) };
    let col = |j: usize| -> [i8; CHUNKS] { std::array::from_fn(|i| sf.get(i, j)) };
    let neg = |v: [i8; CHUNKS]| -> [i8; CHUNKS] { std::array::from_fn(|m| -v[m]) };
    for a in 0..CHUNKS {
        for b in (a + 1)..CHUNKS {
            if row(a) == row(b) || row(a) == neg(row(b)) {
                return false;
            }
            if col(a) == col(b) || col(a) == neg(col(b)) {
                return false;
            }
        }
    }
    true
}

/// Smallest orbit member under the text-encoding order; equal canonical
/// forms characterize equivalent grids.
pub fn canonical_form(sf: &BlockSF) -> BlockSF {
    let mut best = *sf;
    for elem in group_elements() {
        let candidate = apply(&elem, sf);
        if candidate < best {
            best = candidate;
        }
    }
    best
}

/// Number of distinct grids in the orbit of `sf`.
pub fn orbit_size(sf: &BlockSF) -> usize {
    let mut seen = HashSet::new();
    for elem in group_elements() {
        seen.insert(apply(&elem, sf));
    }
    seen.len()
}

/// Search filter: keep a candidate only if it is trainable (C2) and no
/// equivalent grid is already pending or recorded. Both sets are keyed by
/// canonical form.
pub fn filter_accept(
    sf: &BlockSF,
    pending: &HashSet<BlockSF>,
    history: &HashSet<BlockSF>,
) -> bool {
    if !check_c2(sf) {
        return false;
    }
    let canon = canonical_form(sf);
    !pending.contains(&canon) && !history.contains(&canon)
}

/// All inequivalent 4-block grids passing C2, as canonical forms sorted by
/// their text encoding.
pub fn enumerate_b4() -> Vec<BlockSF> {
    // Exhaust 4-cell supports and all label/sign fillings, keep C2 passers,
    // then partition into orbits.
    let cells: Vec<(usize, usize)> = (0..CHUNKS)
        .flat_map(|i| (0..CHUNKS).map(move |j| (i, j)))
        .collect();
    let values: [i8; 8] = [-4, -3, -2, -1, 1, 2, 3, 4];

    let mut survivors: HashSet<BlockSF> = HashSet::new();
    for a in 0..cells.len() {
        for b in (a + 1)..cells.len() {
            for c in (b + 1)..cells.len() {
                for d in (c + 1)..cells.len() {
                    let support = [cells[a], cells[b], cells[c], cells[d]];
                    // C2 needs every row, column and label covered; with only
                    // four cells the support must hit all rows and columns.
                    let mut rows = [false; CHUNKS];
                    let mut cols = [false; CHUNKS];
                    for &(i, j) in &support {
                        rows[i] = true;
                        cols[j] = true;
                    }
                    if rows != [true; CHUNKS] || cols != [true; CHUNKS] {
                        continue;
                    }
                    for filling in 0..values.len().pow(4) {
                        let mut sf = BlockSF::zero();
                        let mut f = filling;
                        for &(i, j) in &support {
                            sf.set(i, j, values[f % 8]).unwrap();
                            f /= 8;
                        }
                        if check_c2(&sf) {
                            survivors.insert(sf);
                        }
                    }
                }
            }
        }
    }

    let mut classes = Vec::new();
    while let Some(&seed) = survivors.iter().next() {
        let mut best = seed;
        let mut orbit = Vec::new();
        for elem in group_elements() {
            let member = apply(&elem, &seed);
            if member < best {
                best = member;
            }
            orbit.push(member);
        }
        for member in orbit {
            survivors.remove(&member);
        }
        classes.push(best);
    }
    classes.sort();
    classes
}

use serde::{Deserialize, Serialize};

/// One element of the orthonormal Haar system on `[0, 1]`.
///
/// Level `-1` is the constant father function; levels `l >= 0` hold the
/// mother wavelets `2^(l/2) psi(2^l x - k)` for `k = 0..2^l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaarAtom {
    pub level: i32,
    pub position: u32,
}

impl HaarAtom {
    pub const FATHER: HaarAtom = HaarAtom {
        level: -1,
        position: 0,
    };

    pub fn sup_norm(&self) -> f64 {
        if self.level < 0 {
            1.0
        } else {
            2f64.powf(self.level as f64 / 2.0)
        }
    }

    /// Pointwise value. Cells are half-open except that `x = 1` belongs to
    /// the last cell of each level.
    pub fn value(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        if self.level < 0 {
            return 1.0;
        }
        let scale = 2f64.powi(self.level);
        let cells = 1u64 << self.level;
        let t = x * scale;
        let cell = (t.floor() as u64).min(cells - 1);
        if cell != self.position as u64 {
            return 0.0;
        }
        let frac = t - cell as f64;
        let amp = scale.sqrt();
        if frac < 0.5 {
            amp
        } else {
            -amp
        }
    }
}

/// Atoms `(level, position)` for levels `-1..=l_max`, father first and then
/// level by level in increasing position.
pub fn haar_atoms(l_max: u32) -> Vec<HaarAtom> {
    let mut atoms = vec![HaarAtom::FATHER];
    for level in 0..=l_max {
        for position in 0..(1u32 << level) {
            atoms.push(HaarAtom {
                level: level as i32,
                position,
            });
        }
    }
    atoms
}

/// The first `count` atoms of the ordering used by [`haar_atoms`].
pub fn haar_atoms_truncated(count: usize) -> Vec<HaarAtom> {
    let mut l_max = 0u32;
    while (1usize << (l_max + 1)) < count {
        l_max += 1;
    }
    let mut atoms = haar_atoms(l_max);
    atoms.truncate(count);
    atoms
}

/// Largest `l` with `2^l <= n / ln n`; `0` when no level satisfies it.
pub fn truncation_level(n: usize) -> u32 {
    if n < 2 {
        return 0;
    }
    let budget = n as f64 / (n as f64).ln();
    let mut level = 0u32;
    while 2f64.powi(level as i32 + 1) <= budget {
        level += 1;
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn father_is_constant() {
        for x in [0.0, 0.3, 0.999, 1.0] {
            assert_eq!(HaarAtom::FATHER.value(x), 1.0);
        }
        assert_eq!(HaarAtom::FATHER.value(1.5), 0.0);
    }

    #[test]
    fn mother_signs() {
        let m = HaarAtom {
            level: 0,
            position: 0,
        };
        assert_eq!(m.value(0.25), 1.0);
        assert_eq!(m.value(0.75), -1.0);
        assert_eq!(m.value(1.0), -1.0);
    }

    #[test]
    fn level_four_sup_norm() {
        let a = HaarAtom {
            level: 4,
            position: 3,
        };
        assert_eq!(a.sup_norm(), 4.0);
        assert_eq!(a.value(3.0 / 16.0 + 0.01), 4.0);
        assert_eq!(a.value(0.5), 0.0);
    }

    #[test]
    fn atom_counts() {
        assert_eq!(haar_atoms(0).len(), 2);
        assert_eq!(haar_atoms(5).len(), 64);
        assert_eq!(haar_atoms_truncated(127).len(), 127);
        assert_eq!(haar_atoms_truncated(127)[126].level, 6);
        assert_eq!(haar_atoms_truncated(1), vec![HaarAtom::FATHER]);
    }

    #[test]
    fn truncation_rule() {
        // 200 / ln 200 = 37.7, so 2^5 = 32 fits and 2^6 does not
        assert_eq!(truncation_level(200), 5);
        // 500 / ln 500 = 80.5
        assert_eq!(truncation_level(500), 6);
        assert_eq!(truncation_level(1), 0);
    }
}

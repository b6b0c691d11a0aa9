//! Truncated lattice `{n in N_0^d \ {0} : |n|_1 <= n_max}` and its convolution.

/// Points of the truncated lattice, with precomputed convolution pairs.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub d: usize,
    pub n_max: u32,
    points: Vec<Vec<u32>>,
    /// Mixed-radix index -> point index (`usize::MAX` when outside).
    lookup: Vec<usize>,
    /// For each point `n`, all ordered `(a, b)` with `a + b = n`, `a, b != 0`.
    pairs: Vec<Vec<(usize, usize)>>,
}

impl Lattice {
    pub fn new(d: usize, n_max: u32) -> Self {
        let radix = n_max as usize + 1;
        let size = radix.pow(d as u32);
        let mut lookup = vec![usize::MAX; size];
        let mut points = Vec::new();
        for code in 0..size {
            let mut n = Vec::with_capacity(d);
            let mut c = code;
            for _ in 0..d {
                n.push((c % radix) as u32);
                c /= radix;
            }
            let norm: u32 = n.iter().sum();
            if norm == 0 || norm > n_max {
                continue;
            }
            lookup[code] = points.len();
            points.push(n);
        }
        // Order points by norm so that lower-order states come first.
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| (points[i].iter().sum::<u32>(), points[i].clone()));
        let points: Vec<Vec<u32>> = order.iter().map(|&i| points[i].clone()).collect();
        let mut lattice = Lattice {
            d,
            n_max,
            points,
            lookup: vec![usize::MAX; size],
            pairs: Vec::new(),
        };
        for (idx, n) in lattice.points.iter().enumerate() {
            let code = lattice.code(n);
            lattice.lookup[code] = idx;
        }
        lattice.pairs = (0..lattice.points.len())
            .map(|idx| lattice.decompositions(idx))
            .collect();
        lattice
    }

    fn code(&self, n: &[u32]) -> usize {
        let radix = self.n_max as usize + 1;
        n.iter().rev().fold(0, |acc, &x| acc * radix + x as usize)
    }

    fn decompositions(&self, idx: usize) -> Vec<(usize, usize)> {
        let n = &self.points[idx];
        let mut out = Vec::new();
        let mut a = vec![0u32; self.d];
        loop {
            // advance `a` through the box [0, n] in mixed radix
            let mut carry = true;
            for (ai, &ni) in a.iter_mut().zip(n) {
                if !carry {
                    break;
                }
                if *ai < ni {
                    *ai += 1;
                    carry = false;
                } else {
                    *ai = 0;
                }
            }
            if carry {
                break;
            }
            if a == *n {
                continue;
            }
            let b: Vec<u32> = n.iter().zip(&a).map(|(x, y)| x - y).collect();
            if let (Some(ia), Some(ib)) = (self.index(&a), self.index(&b)) {
                out.push((ia, ib));
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, idx: usize) -> &[u32] {
        &self.points[idx]
    }

    pub fn points(&self) -> &[Vec<u32>] {
        &self.points
    }

    pub fn index(&self, n: &[u32]) -> Option<usize> {
        if n.len() != self.d || n.iter().sum::<u32>() > self.n_max {
            return None;
        }
        match self.lookup[self.code(n)] {
            usize::MAX => None,
            i => Some(i),
        }
    }

    /// `sum_{a + b = n, a, b != 0} u(a) u(b)` over ordered pairs.
    pub fn convolve_at(&self, u: &[f64], idx: usize) -> f64 {
        self.pairs[idx].iter().map(|&(a, b)| u[a] * u[b]).sum()
    }

    /// Same as [`convolve_at`](Self::convolve_at) for an explicit point; zero
    /// outside the lattice.
    pub fn convolve(&self, u: &[f64], n: &[u32]) -> f64 {
        self.index(n).map_or(0.0, |idx| self.convolve_at(u, idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_size() {
        // d = 2: (n+1)(n+2)/2 - 1 points with norm <= n.
        let l = Lattice::new(2, 5);
        assert_eq!(l.len(), 20);
        assert_eq!(Lattice::new(1, 7).len(), 7);
        assert_eq!(l.index(&[0, 0]), None);
        assert_eq!(l.index(&[3, 3]), None);
        assert_eq!(l.point(l.index(&[2, 3]).unwrap()), &[2, 3]);
    }

    #[test]
    fn convolution_examples() {
        let l = Lattice::new(2, 4);
        let mut u = vec![0.0; l.len()];
        u[l.index(&[1, 0]).unwrap()] = 2.0;
        u[l.index(&[0, 1]).unwrap()] = 3.0;
        assert_eq!(l.convolve(&u, &[1, 1]), 12.0);
        assert_eq!(l.convolve(&u, &[1, 0]), 0.0);
        assert_eq!(l.convolve(&u, &[2, 0]), 4.0);
    }

    #[test]
    fn convolution_matches_brute_force() {
        let l = Lattice::new(2, 6);
        let u: Vec<f64> = (0..l.len()).map(|i| 0.1 + (i as f64 * 0.37).sin().abs()).collect();
        for (idx, n) in l.points().iter().enumerate() {
            let mut brute = 0.0;
            for (ia, a) in l.points().iter().enumerate() {
                for (ib, b) in l.points().iter().enumerate() {
                    if a[0] + b[0] == n[0] && a[1] + b[1] == n[1] {
                        brute += u[ia] * u[ib];
                    }
                }
            }
            assert!((l.convolve_at(&u, idx) - brute).abs() < 1e-12);
        }
    }
}

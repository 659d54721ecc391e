//! Wigner small-d matrices by three-term recursion in the degree.
//!
//! For fixed orders `(m, m')` the recursion starts at `l0 = max(|m|, |m'|)`
//! from a closed-form seed (evaluated in log space so that large binomials
//! and tiny half-angle powers do not overflow) and runs upward in `l`:
//!
//! ```text
//! d^{l+1} = (l+1)(2l+1) / sqrt(((l+1)^2 - m^2)((l+1)^2 - m'^2))
//!           * [ (cos b - m m' / (l(l+1))) d^l
//!               - sqrt((l^2 - m^2)(l^2 - m'^2)) / (l(2l+1)) d^{l-1} ]
//! ```
//!
//! Matrices follow `d^l_{m m'}(b) = <l m| exp(-i b J_y) |l m'>`, so
//! `d^1_{10}(b) = -sin(b) / sqrt(2)`.

/// Streams `d^l(beta)` for `l = 0, 1, ..` up to a fixed maximum degree.
pub struct WignerRecursion {
    beta_cos: f64,
    half_cos: f64,
    half_sin: f64,
    lmax: usize,
    width: usize,
    l: usize,
    prev: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
    ln_fact: Vec<f64>,
}

impl WignerRecursion {
    /// Positions the recursion at `l = 0`.
    pub fn new(beta: f64, lmax: usize) -> Self {
        let width = 2 * lmax + 1;
        let mut ln_fact = vec![0.0; 2 * lmax + 2];
        for k in 1..ln_fact.len() {
            ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
        }
        let (half_sin, half_cos) = (0.5 * beta).sin_cos();
        let mut cur = vec![0.0; width * width];
        cur[lmax * width + lmax] = 1.0;
        Self {
            beta_cos: beta.cos(),
            half_cos,
            half_sin,
            lmax,
            width,
            l: 0,
            prev: vec![0.0; width * width],
            cur,
            next: vec![0.0; width * width],
            ln_fact,
        }
    }

    pub fn degree(&self) -> usize {
        self.l
    }

    /// `d^l_{m m'}` at the current degree; zero outside `|m|, |m'| <= l`.
    #[inline]
    pub fn get(&self, m: i64, mp: i64) -> f64 {
        let j = self.lmax as i64;
        self.cur[((m + j) as usize) * self.width + (mp + j) as usize]
    }

    /// Row `m` of the current matrix, indexed by `m' + l`.
    #[inline]
    pub fn row(&self, m: i64) -> &[f64] {
        let j = self.lmax as i64;
        let l = self.l as i64;
        let start = ((m + j) as usize) * self.width + (j - l) as usize;
        &self.cur[start..start + (2 * l + 1) as usize]
    }

    /// Moves to degree `l + 1`. Panics past `lmax`.
    pub fn advance(&mut self) {
        assert!(self.l < self.lmax, "Wigner recursion past lmax");
        let l = self.l as i64;
        let ln = l + 1;
        let j = self.lmax as i64;
        let w = self.width;
        let lf = l as f64;
        let lnf = ln as f64;
        for m in -ln..=ln {
            let row = ((m + j) as usize) * w;
            for mp in -ln..=ln {
                let idx = row + (mp + j) as usize;
                let v = if m.abs() == ln || mp.abs() == ln {
                    self.seed(ln, m, mp)
                } else {
                    let (mf, mpf) = (m as f64, mp as f64);
                    let a = lnf * (2.0 * lf + 1.0) / ((lnf * lnf - mf * mf) * (lnf * lnf - mpf * mpf)).sqrt();
                    if l == 0 {
                        a * self.beta_cos * self.cur[idx]
                    } else {
                        let c1 = self.beta_cos - mf * mpf / (lf * (lf + 1.0));
                        let c2 = ((lf * lf - mf * mf) * (lf * lf - mpf * mpf)).sqrt() / (lf * (2.0 * lf + 1.0));
                        a * (c1 * self.cur[idx] - c2 * self.prev[idx])
                    }
                };
                self.next[idx] = v;
            }
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
        std::mem::swap(&mut self.cur, &mut self.next);
        self.l += 1;
    }

    /// Closed form on the boundary `max(|m|, |m'|) = j`.
    fn seed(&self, j: i64, m: i64, mp: i64) -> f64 {
        if m == j {
            self.top_row(j, mp) * parity(j - mp)
        } else if m == -j {
            self.bottom_row(j, mp)
        } else if mp == j {
            // d_{m j} = (-1)^{j - m} d_{j m}
            self.top_row(j, m)
        } else {
            // d_{m, -j} = (-1)^{j + m} d_{-j, m}
            self.bottom_row(j, m) * parity(j + m)
        }
    }

    /// `sqrt(C(2j, j+k)) cos^{j+k}(b/2) sin^{j-k}(b/2)`.
    fn top_row(&self, j: i64, k: i64) -> f64 {
        self.binomial_power(j, k, j + k, j - k)
    }

    /// `sqrt(C(2j, j+k)) cos^{j-k}(b/2) sin^{j+k}(b/2)`.
    fn bottom_row(&self, j: i64, k: i64) -> f64 {
        self.binomial_power(j, k, j - k, j + k)
    }

    fn binomial_power(&self, j: i64, k: i64, pc: i64, ps: i64) -> f64 {
        let lnb =
            0.5 * (self.ln_fact[(2 * j) as usize] - self.ln_fact[(j + k) as usize] - self.ln_fact[(j - k) as usize]);
        let mut sign = 1.0;
        let mut ln = lnb;
        for (x, p) in [(self.half_cos, pc), (self.half_sin, ps)] {
            if p == 0 {
                continue;
            }
            if x == 0.0 {
                return 0.0;
            }
            if x < 0.0 && p % 2 == 1 {
                sign = -sign;
            }
            ln += p as f64 * x.abs().ln();
        }
        sign * ln.exp()
    }
}

#[inline]
fn parity(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Full `(2l+1) x (2l+1)` matrix `d^l(beta)`, row-major in `(m + l, m' + l)`.
pub fn wigner_d_matrix(l: usize, beta: f64) -> Vec<f64> {
    let mut rec = WignerRecursion::new(beta, l);
    for _ in 0..l {
        rec.advance();
    }
    let li = l as i64;
    let mut out = Vec::with_capacity((2 * l + 1) * (2 * l + 1));
    for m in -li..=li {
        out.extend_from_slice(rec.row(m));
    }
    out
}

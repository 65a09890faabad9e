//! Anode saturation `C(.)`: a piecewise-linear curve that rises to a peak
//! and may fall afterwards, and the law of a sample pushed through it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixed::Mixed;
use crate::quad::{integrate_breaks, QuadOptions};

/// Behaviour of `C` past the last grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// Constant at the last value.
    Hold,
    /// Continue the last segment's slope.
    Extend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearFn {
    grid_x: Vec<f64>,
    grid_c: Vec<f64>,
    tail: Tail,
}

impl NonlinearFn {
    /// A curve through `(grid_x[i], grid_c[i])`. The grid must start at 0,
    /// increase strictly, and `C(0)` must be 0. The shape is not checked;
    /// see [`Self::check_shape`].
    pub fn new(grid_x: Vec<f64>, grid_c: Vec<f64>, tail: Tail) -> Result<Self> {
        if grid_x.len() < 2 || grid_x.len() != grid_c.len() {
            return Err(Error::Domain(
                "need at least two matching grid points".into(),
            ));
        }
        if grid_x[0] != 0.0 {
            return Err(Error::Domain("grid must start at 0".into()));
        }
        if grid_x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("grid must be strictly increasing".into()));
        }
        if grid_c[0] != 0.0 {
            return Err(Error::Domain("C(0) must be 0".into()));
        }
        if grid_c.iter().chain(&grid_x).any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid values must be finite".into()));
        }
        let c = Self {
            grid_x,
            grid_c,
            tail,
        };
        if tail == Tail::Extend && c.last_slope() < 0.0 {
            return Err(Error::Domain(
                "an extended tail must not fall below zero".into(),
            ));
        }
        Ok(c)
    }

    /// The linear response.
    pub fn identity() -> Self {
        Self {
            grid_x: vec![0.0, 1.0],
            grid_c: vec![0.0, 1.0],
            tail: Tail::Extend,
        }
    }

    /// Tabulates `f` on `n + 1` evenly spaced points over `[0, x_max]`.
    pub fn tabulate(f: impl Fn(f64) -> f64, x_max: f64, n: usize, tail: Tail) -> Result<Self> {
        let xs: Vec<f64> = (0..=n).map(|i| x_max * i as f64 / n as f64).collect();
        let cs = xs
            .iter()
            .map(|&x| if x == 0.0 { 0.0 } else { f(x) })
            .collect();
        Self::new(xs, cs, tail)
    }

    /// `l_max (x / x_s) exp(1 - x / x_s)`: rises to `l_max` at `x_s` and then
    /// decays, mimicking space-charge supersaturation.
    pub fn supersaturating(l_max: f64, x_s: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::tabulate(
            |x| l_max * (x / x_s) * (1.0 - x / x_s).exp(),
            x_max,
            n,
            Tail::Hold,
        )
    }

    pub fn grid_x(&self) -> &[f64] {
        &self.grid_x
    }

    pub fn grid_c(&self) -> &[f64] {
        &self.grid_c
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    pub fn is_identity(&self) -> bool {
        self.tail == Tail::Extend
            && self
                .grid_x
                .iter()
                .zip(&self.grid_c)
                .all(|(x, c)| (x - c).abs() <= 1e-15 * x.abs().max(1.0))
    }

    fn last_slope(&self) -> f64 {
        let n = self.grid_x.len();
        (self.grid_c[n - 1] - self.grid_c[n - 2]) / (self.grid_x[n - 1] - self.grid_x[n - 2])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.grid_x.len();
        if x <= 0.0 {
            return 0.0;
        }
        if x >= self.grid_x[n - 1] {
            return match self.tail {
                Tail::Hold => self.grid_c[n - 1],
                Tail::Extend => self.grid_c[n - 1] + self.last_slope() * (x - self.grid_x[n - 1]),
            };
        }
        let i = self.grid_x.partition_point(|&v| v <= x) - 1;
        let t = (x - self.grid_x[i]) / (self.grid_x[i + 1] - self.grid_x[i]);
        self.grid_c[i] + t * (self.grid_c[i + 1] - self.grid_c[i])
    }

    /// Location of the peak of the grid values.
    pub fn x_s(&self) -> f64 {
        let i = argmax(&self.grid_c);
        self.grid_x[i]
    }

    /// Highest output level `l` for which `{x : C(x) <= l}` has finite
    /// length: the level the curve settles at for large inputs, or infinity
    /// when it grows without bound.
    pub fn l_max(&self) -> f64 {
        let n = self.grid_c.len();
        if self.tail == Tail::Extend && self.last_slope() > 0.0 {
            return f64::INFINITY;
        }
        self.grid_c[n - 1]
    }

    /// Largest value on the grid.
    pub fn peak(&self) -> f64 {
        self.grid_c
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks `C` increases strictly up to its peak and does not increase after.
    pub fn check_shape(&self) -> Result<()> {
        let p = argmax(&self.grid_c);
        if self.grid_c[..=p].windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "C must increase strictly before its peak".into(),
            ));
        }
        if self.grid_c[p..].windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Domain("C must not increase after its peak".into()));
        }
        if self.tail == Tail::Extend && p + 1 < self.grid_c.len() && self.last_slope() > 0.0 {
            return Err(Error::Domain("extended tail rises after the peak".into()));
        }
        Ok(())
    }

    /// Splits the grid at the peak into the rising and falling branches.
    pub fn branches(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let p = argmax(&self.grid_c);
        let pts: Vec<(f64, f64)> = self
            .grid_x
            .iter()
            .copied()
            .zip(self.grid_c.iter().copied())
            .collect();
        (pts[..=p].to_vec(), pts[p..].to_vec())
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Relative width of the bin that receives the mass of a flat stretch.
const FLAT_BIN_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
struct Segment {
    x0: f64,
    x1: f64,
    c0: f64,
    slope: f64,
}

#[derive(Debug, Clone, Copy)]
struct Bin {
    lo: f64,
    hi: f64,
    mass: f64,
}

/// Law of `C(Z)` for a mixed `Z` with its atom at 0.
#[derive(Debug, Clone)]
pub struct Transformed<D> {
    inner: D,
    segments: Vec<Segment>,
    bins: Vec<Bin>,
    hi: f64,
    mean: f64,
    variance: f64,
}

/// The law of the sample after the anode response `c`. Flat stretches of
/// `C` (including a held tail) would create atoms; their mass is spread
/// over a narrow bin instead.
pub fn nonlinear_sample_density<D: Mixed<f64> + Clone>(
    dist: &D,
    c: &NonlinearFn,
) -> Result<Transformed<D>> {
    if dist.atom_location() != 0.0 || dist.lower() != 0.0 {
        return Err(Error::Domain(
            "input law must sit on [0, inf) with its atom at 0".into(),
        ));
    }
    let upper = dist.upper_cutoff(1e-17);
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-11,
        max_intervals: 400,
    };
    let mut xs: Vec<f64> = c.grid_x.iter().copied().filter(|&x| x < upper).collect();
    let inner_breaks = dist.breakpoints(1e-17);
    let mut segments = Vec::new();
    let mut flats: Vec<(f64, f64)> = Vec::new();
    let n = c.grid_x.len();
    for i in 0..n - 1 {
        let (x0, x1) = (c.grid_x[i], c.grid_x[i + 1]);
        if x0 >= upper {
            break;
        }
        let slope = (c.grid_c[i + 1] - c.grid_c[i]) / (x1 - x0);
        if slope == 0.0 {
            flats.push((x0, x1.min(upper)));
        } else {
            segments.push(Segment {
                x0,
                x1,
                c0: c.grid_c[i],
                slope,
            });
        }
    }
    let last = c.grid_x[n - 1];
    if last < upper {
        match c.tail {
            Tail::Hold => flats.push((last, upper)),
            Tail::Extend => {
                let slope = c.last_slope();
                if slope == 0.0 {
                    flats.push((last, upper));
                } else {
                    segments.push(Segment {
                        x0: last,
                        x1: f64::INFINITY,
                        c0: c.grid_c[n - 1],
                        slope,
                    });
                }
            }
        }
        xs.push(upper);
    }
    let mut c_vals: Vec<f64> = xs.iter().map(|&x| c.eval(x)).collect();
    c_vals.push(0.0);
    let span = c_vals
        .iter()
        .copied()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let width = FLAT_BIN_FRACTION * span;
    let mut bins = Vec::new();
    for (x0, x1) in flats {
        let mut br: Vec<f64> = vec![x0, x1];
        br.extend(inner_breaks.iter().copied().filter(|&b| b > x0 && b < x1));
        br.sort_by(f64::total_cmp);
        let mass = integrate_breaks(|x| dist.density(x), &br, opts).0.value;
        let level = c.eval(x0);
        let lo = (level - width / 2.0).max(0.0);
        bins.push(Bin {
            lo,
            hi: lo + width,
            mass,
        });
    }
    let hi = c_vals.iter().copied().fold(0.0, f64::max) + width;

    // moments through the inner law
    let mut br = inner_breaks.clone();
    br.extend(c.grid_x.iter().copied().filter(|&x| x > 0.0 && x < upper));
    br.sort_by(f64::total_cmp);
    br.dedup();
    let m1 = integrate_breaks(|x| dist.density(x) * c.eval(x), &br, opts)
        .0
        .value;
    let m2 = integrate_breaks(|x| dist.density(x) * c.eval(x).powi(2), &br, opts)
        .0
        .value;
    Ok(Transformed {
        inner: dist.clone(),
        segments,
        bins,
        hi,
        mean: m1,
        variance: (m2 - m1 * m1).max(0.0),
    })
}

impl<D: Mixed<f64>> Mixed<f64> for Transformed<D> {
    fn atom_weight(&self) -> f64 {
        self.inner.atom_weight()
    }

    fn density(&self, y: f64) -> f64 {
        let mut f = 0.0;
        for s in &self.segments {
            let c1 = s.c0 + s.slope * (s.x1 - s.x0);
            let (lo, hi) = if s.slope > 0.0 {
                (s.c0, c1)
            } else {
                (c1, s.c0)
            };
            if y > lo && y <= hi {
                let x = s.x0 + (y - s.c0) / s.slope;
                f += self.inner.density(x) / s.slope.abs();
            }
        }
        for b in &self.bins {
            if y > b.lo && y <= b.hi {
                f += b.mass / (b.hi - b.lo);
            }
        }
        f
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn variance(&self) -> f64 {
        self.variance
    }

    fn upper_cutoff(&self, _tol: f64) -> f64 {
        self.hi
    }

    fn breakpoints(&self, _tol: f64) -> Vec<f64> {
        let mut b = vec![0.0, self.hi];
        for s in &self.segments {
            b.push(s.c0);
            if s.x1.is_finite() {
                b.push(s.c0 + s.slope * (s.x1 - s.x0));
            }
        }
        for bin in &self.bins {
            b.push(bin.lo);
            b.push(bin.hi);
        }
        b.retain(|&v| v >= 0.0 && v <= self.hi);
        b.extend(crate::quad::uniform_breaks(0.0, self.hi, 16));
        b.sort_by(f64::total_cmp);
        b.dedup_by(|x, y| (*x - *y).abs() < 1e-14 * self.hi);
        b
    }
}

//! Derivative-free maximisation over a box: multi-start grid followed by
//! coordinate-wise golden-section refinement.

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_SHIFTS: usize = 12;

#[derive(Debug, Clone)]
pub(crate) struct Axis {
    pub lo: f64,
    pub hi: f64,
    /// Grid starts, ascending and inside `[lo, hi]`.
    pub grid: [f64; 3],
}

impl Axis {
    /// Grid `{a, (a+b)/2, b}` with bounds widened by `margin` on both sides.
    pub fn around(a: f64, b: f64, margin: f64) -> Axis {
        let (a, b) = if b - a < 1e-6 { (a - 0.7, b + 0.7) } else { (a, b) };
        Axis {
            lo: a - margin,
            hi: b + margin,
            grid: [a, 0.5 * (a + b), b],
        }
    }

    pub fn spacing(&self) -> f64 {
        0.5 * (self.grid[2] - self.grid[0])
    }

    /// Pulls the grid halfway toward its centre.
    pub fn halved(&self) -> Axis {
        let c = self.grid[1];
        Axis {
            grid: [0.5 * (self.grid[0] + c), c, 0.5 * (self.grid[2] + c)],
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub theta: [f64; 3],
    pub value: f64,
    pub evaluations: usize,
}

pub(crate) struct Search<'a, F: FnMut(&[f64; 3]) -> f64> {
    pub axes: &'a [Axis; 3],
    pub tol: f64,
    pub max_sweeps: usize,
    pub objective: F,
    pub log: Vec<String>,
    evaluations: usize,
}

impl<'a, F: FnMut(&[f64; 3]) -> f64> Search<'a, F> {
    pub fn new(axes: &'a [Axis; 3], tol: f64, max_sweeps: usize, objective: F) -> Self {
        Search {
            axes,
            tol,
            max_sweeps,
            objective,
            log: Vec::new(),
            evaluations: 0,
        }
    }

    fn eval(&mut self, theta: &[f64; 3]) -> f64 {
        self.evaluations += 1;
        let v = (self.objective)(theta);
        if !v.is_finite() {
            self.log.push(format!(
                "({:.4}, {:.4}, {:.4}) -> {v}",
                theta[0], theta[1], theta[2]
            ));
            return f64::NEG_INFINITY;
        }
        v
    }

    /// Maximises; `None` if no grid start gives a finite value.
    pub fn run(mut self) -> (Option<Outcome>, Vec<String>) {
        let mut best: Option<([f64; 3], f64)> = None;
        for &a in &self.axes[0].grid {
            for &b in &self.axes[1].grid {
                for &c in &self.axes[2].grid {
                    let theta = [a, b, c];
                    let v = self.eval(&theta);
                    if v.is_finite() && best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((theta, v));
                    }
                }
            }
        }
        let Some((mut theta, mut value)) = best else {
            return (None, self.log);
        };
        for _ in 0..self.max_sweeps {
            let mut moved: f64 = 0.0;
            for k in 0..3 {
                let (x, v) = self.line(&theta, k, value);
                moved = moved.max((x - theta[k]).abs());
                if v >= value {
                    theta[k] = x;
                    value = v;
                }
            }
            if moved < 1e-3 {
                break;
            }
        }
        let evaluations = self.evaluations;
        (
            Some(Outcome {
                theta,
                value,
                evaluations,
            }),
            self.log,
        )
    }

    /// Golden section along coordinate `k`, bracketed at ± one grid spacing
    /// and shifted while the optimum sits on an interior bracket edge.
    fn line(&mut self, theta: &[f64; 3], k: usize, value: f64) -> (f64, f64) {
        let axis = self.axes[k].clone();
        let h = axis.spacing().max(10.0 * self.tol);
        let mut centre = theta[k];
        let mut best = (theta[k], value);
        for _ in 0..MAX_SHIFTS {
            let lo = (centre - h).max(axis.lo);
            let hi = (centre + h).min(axis.hi);
            let (x, v) = self.golden(theta, k, lo, hi);
            if v > best.1 {
                best = (x, v);
            }
            let at_lo = x - lo < 2.0 * self.tol && lo > axis.lo;
            let at_hi = hi - x < 2.0 * self.tol && hi < axis.hi;
            if !(at_lo || at_hi) || best.0 != x {
                break;
            }
            centre = x;
        }
        best
    }

    fn golden(&mut self, theta: &[f64; 3], k: usize, mut a: f64, mut b: f64) -> (f64, f64) {
        let at = |s: &mut Self, x: f64| {
            let mut t = *theta;
            t[k] = x;
            s.eval(&t)
        };
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = at(self, c);
        let mut fd = at(self, d);
        while b - a > self.tol {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = at(self, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = at(self, d);
            }
        }
        // Endpoints are candidates too, so boundary optima are reachable.
        let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
        for x in [a, b] {
            let v = at(self, x);
            if v > best.1 {
                best = (x, v);
            }
        }
        best
    }
}

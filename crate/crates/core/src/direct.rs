//! DIRECT (DIviding RECTangles) global optimization over a box.
//!
//! The box is mapped to the unit hypercube. Each hyperrectangle is sampled at
//! its center; in every iteration the potentially optimal rectangles (the lower
//! right convex hull of the (size, value) cloud, subject to an ε-improvement
//! condition on the incumbent) are trisected along their longest sides.
//! Internally the objective is minimized; [`maximize`] negates.

use serde::Serialize;

use crate::ssm::BoxDomain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectConfig {
    pub max_evals: usize,
    /// Relative slack in the potential-optimality test.
    pub epsilon: f64,
    /// Rectangles trisected this many times along every side are not divided further.
    pub max_depth: u32,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            max_evals: 500,
            epsilon: 1e-4,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub n_evals: usize,
    /// Every evaluated point in original coordinates, in evaluation order.
    pub samples: Vec<(Vec<f64>, f64)>,
    /// Best value seen after each evaluation.
    pub incumbent_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Rect {
    center: Vec<f64>,
    /// Number of trisections per dimension; the side length is `3^-level`.
    levels: Vec<u32>,
    /// Minimization value at the center.
    f: f64,
    size: f64,
}

fn half_diagonal(levels: &[u32]) -> f64 {
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    0.5 * sorted
        .iter()
        .map(|&l| 3f64.powi(-2 * l as i32))
        .sum::<f64>()
        .sqrt()
}

struct Search<'a, F: FnMut(&[f64]) -> f64> {
    objective: F,
    domain: &'a BoxDomain,
    config: DirectConfig,
    rects: Vec<Rect>,
    best: usize,
    samples: Vec<(Vec<f64>, f64)>,
    incumbent_trace: Vec<f64>,
}

impl<'a, F: FnMut(&[f64]) -> f64> Search<'a, F> {
    fn new(objective: F, domain: &'a BoxDomain, config: DirectConfig) -> Self {
        let mut s = Self {
            objective,
            domain,
            config,
            rects: Vec::new(),
            best: 0,
            samples: Vec::new(),
            incumbent_trace: Vec::new(),
        };
        let d = domain.dim();
        let center = vec![0.5; d];
        let f = s.evaluate(&center);
        s.rects.push(Rect {
            center,
            levels: vec![0; d],
            f,
            size: half_diagonal(&vec![0; d]),
        });
        s.incumbent_trace.push(-f);
        s
    }

    fn n_evals(&self) -> usize {
        self.samples.len()
    }

    /// Minimization value; NaN and -inf objective values count as +inf.
    fn evaluate(&mut self, unit: &[f64]) -> f64 {
        let theta = self.domain.from_unit(unit);
        let v = (self.objective)(&theta);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        self.samples.push((theta, v));
        -v
    }

    fn record(&mut self, idx: usize) {
        if self.rects[idx].f < self.rects[self.best].f {
            self.best = idx;
        }
        let best = -self.rects[self.best].f;
        self.incumbent_trace.push(best);
    }

    fn potentially_optimal(&self) -> Vec<usize> {
        let worst_finite = self
            .rects
            .iter()
            .map(|r| r.f)
            .filter(|f| f.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let eff = |f: f64| {
            if f.is_finite() {
                f
            } else if worst_finite.is_finite() {
                worst_finite
            } else {
                0.0
            }
        };
        // best rectangle per distinct size, lowest creation index on ties
        let mut groups: Vec<(f64, f64, usize)> = Vec::new();
        for (i, r) in self.rects.iter().enumerate() {
            if r.levels.iter().all(|&l| l >= self.config.max_depth) {
                continue;
            }
            let f = eff(r.f);
            match groups.iter_mut().find(|g| g.0 == r.size) {
                Some(g) => {
                    if f < g.1 {
                        *g = (r.size, f, i);
                    }
                }
                None => groups.push((r.size, f, i)),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        let fmin = eff(self.rects[self.best].f);
        let slack = self.config.epsilon * fmin.abs().max(1e-8);

        let mut selected = Vec::new();
        for (j, &(dj, fj, idx)) in groups.iter().enumerate() {
            let k_low = groups[..j]
                .iter()
                .map(|&(di, fi, _)| (fj - fi) / (dj - di))
                .fold(f64::NEG_INFINITY, f64::max);
            let k_high = groups[j + 1..]
                .iter()
                .map(|&(di, fi, _)| (fi - fj) / (di - dj))
                .fold(f64::INFINITY, f64::min);
            if k_high <= 0.0 || k_low > k_high {
                continue;
            }
            if k_high.is_finite() && fj - k_high * dj > fmin - slack {
                continue;
            }
            selected.push(idx);
        }
        selected
    }

    fn divide(&mut self, idx: usize) {
        let rect = self.rects[idx].clone();
        let min_level = *rect.levels.iter().min().expect("non-empty");
        let long_dims: Vec<usize> = (0..rect.levels.len())
            .filter(|&i| rect.levels[i] == min_level)
            .collect();
        let delta = 3f64.powi(-(min_level as i32 + 1));

        let mut probes = Vec::with_capacity(long_dims.len());
        for &dim in &long_dims {
            let mut plus = rect.center.clone();
            plus[dim] += delta;
            let mut minus = rect.center.clone();
            minus[dim] -= delta;
            let fp = self.evaluate(&plus);
            let fm = self.evaluate(&minus);
            probes.push((dim, plus, fp, minus, fm));
        }
        // split first along the dimension whose best probe is lowest
        probes.sort_by(|a, b| a.2.min(a.4).total_cmp(&b.2.min(b.4)).then(a.0.cmp(&b.0)));

        let mut levels = rect.levels.clone();
        for (dim, plus, fp, minus, fm) in probes {
            levels[dim] += 1;
            let size = half_diagonal(&levels);
            for (center, f) in [(plus, fp), (minus, fm)] {
                self.rects.push(Rect {
                    center,
                    levels: levels.clone(),
                    f,
                    size,
                });
                self.record(self.rects.len() - 1);
            }
        }
        let parent = &mut self.rects[idx];
        parent.levels = levels;
        parent.size = half_diagonal(&parent.levels);
    }

    fn run(&mut self) {
        while self.n_evals() < self.config.max_evals {
            let chosen = self.potentially_optimal();
            if chosen.is_empty() {
                break;
            }
            for idx in chosen {
                if self.n_evals() >= self.config.max_evals {
                    break;
                }
                self.divide(idx);
            }
        }
    }

    fn finish(self) -> DirectResult {
        let best = &self.rects[self.best];
        DirectResult {
            theta: self.domain.from_unit(&best.center),
            value: -best.f,
            n_evals: self.samples.len(),
            samples: self.samples,
            incumbent_trace: self.incumbent_trace,
        }
    }
}

/// Maximizes `objective` over `domain`; `-inf` values are allowed and treated
/// as the worst value seen.
pub fn maximize(
    objective: impl FnMut(&[f64]) -> f64,
    domain: &BoxDomain,
    config: &DirectConfig,
) -> DirectResult {
    let mut search = Search::new(objective, domain, *config);
    search.run();
    search.finish()
}

/// Standard global-optimization test functions (negated, for maximization).
pub mod testfns {
    use crate::ssm::BoxDomain;

    pub struct TestFunction {
        pub name: &'static str,
        pub f: fn(&[f64]) -> f64,
        pub lower: &'static [f64],
        pub upper: &'static [f64],
    }

    impl TestFunction {
        pub fn domain(&self) -> BoxDomain {
            BoxDomain::new(self.lower.to_vec(), self.upper.to_vec()).expect("static bounds")
        }
    }

    fn quadratic(x: &[f64]) -> f64 {
        -(x[0] - 0.3).powi(2)
    }

    fn sphere2(x: &[f64]) -> f64 {
        -((x[0] - 0.7).powi(2) + (x[1] - 0.7).powi(2))
    }

    fn six_hump_camel(x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        -((4.0 - 2.1 * a * a + a.powi(4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b)
    }

    fn branin(x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        let (a, b) = (x[0], x[1]);
        let c1 = 5.1 / (4.0 * PI * PI);
        let c2 = 5.0 / PI;
        let t = 1.0 / (8.0 * PI);
        -((b - c1 * a * a + c2 * a - 6.0).powi(2) + 10.0 * (1.0 - t) * a.cos() + 10.0)
    }

    fn goldstein_price(x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        let p1 = 1.0
            + (a + b + 1.0).powi(2)
                * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
        let p2 = 30.0
            + (2.0 * a - 3.0 * b).powi(2)
                * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b);
        -(p1 * p2)
    }

    pub const REGISTRY: &[TestFunction] = &[
        TestFunction {
            name: "quadratic",
            f: quadratic,
            lower: &[0.0],
            upper: &[1.0],
        },
        TestFunction {
            name: "sphere2",
            f: sphere2,
            lower: &[0.0, 0.0],
            upper: &[1.0, 1.0],
        },
        TestFunction {
            name: "camel6",
            f: six_hump_camel,
            lower: &[-3.0, -2.0],
            upper: &[3.0, 2.0],
        },
        TestFunction {
            name: "branin",
            f: branin,
            lower: &[-5.0, 0.0],
            upper: &[10.0, 15.0],
        },
        TestFunction {
            name: "goldstein-price",
            f: goldstein_price,
            lower: &[-2.0, -2.0],
            upper: &[2.0, 2.0],
        },
    ];

    pub fn by_name(name: &str) -> Option<&'static TestFunction> {
        REGISTRY.iter().find(|t| t.name == name)
    }
}

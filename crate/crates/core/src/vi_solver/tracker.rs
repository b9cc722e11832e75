use std::collections::VecDeque;

/// Locates where one row leaves a stopping region from the obstacle gap on
/// the continuation side. Near a smooth-fit boundary the square root of the
/// gap is linear in `x`; fitting it a few cells away from the boundary,
/// where the discrete values are accurate relative to the gap, and
/// extrapolating to zero beats reading the contact set, whose position is
/// only first-order accurate.
#[derive(Debug, Clone)]
pub(super) struct CrossingTracker {
    window: (f64, f64),
    cell: f64,
    floor: f64,
    recent: VecDeque<(f64, f64, f64)>,
    pending: Option<(f64, f64)>,
    after: Vec<(f64, f64)>,
    pub crossing: Option<f64>,
    pub fitted: Option<f64>,
}

impl CrossingTracker {
    /// `window` is the range of `|z - z_crossing|` used by the fit; a fitted
    /// root is raised to `floor` and kept only within `cell` of the crossing in `ln x`.
    pub fn new(window: (f64, f64), cell: f64, floor: f64) -> Self {
        CrossingTracker {
            window,
            cell,
            floor,
            recent: VecDeque::new(),
            pending: None,
            after: Vec::new(),
            crossing: None,
            fitted: None,
        }
    }

    /// Records a continuation-side sample `(z, x, gap)`.
    pub fn sample(&mut self, z: f64, x: f64, gap: f64) {
        let (lo, hi) = self.window;
        if let Some((zc, _)) = self.pending {
            let d = (z - zc).abs();
            if d > hi {
                self.finish_pending();
            } else if d > lo {
                self.after.push((x, gap.max(0.0).sqrt()));
            }
            return;
        }
        self.recent.push_back((z, x, gap.max(0.0).sqrt()));
        while let Some(&(z0, _, _)) = self.recent.front() {
            if (z - z0).abs() > hi {
                self.recent.pop_front();
            } else {
                break;
            }
        }
    }

    /// The row has just entered the stopping region; the samples already
    /// seen lie on the continuation side.
    pub fn entered(&mut self, zc: f64, xc: f64) {
        let (lo, hi) = self.window;
        let pts: Vec<(f64, f64)> = self
            .recent
            .iter()
            .filter(|(z, _, _)| {
                let d = (z - zc).abs();
                d > lo && d <= hi
            })
            .map(|&(_, x, q)| (x, q))
            .collect();
        self.crossing = Some(xc);
        self.fitted = self.fit(&pts, xc);
        self.recent.clear();
    }

    /// The row has just left the stopping region; the continuation side is
    /// still ahead.
    pub fn left(&mut self, zc: f64, xc: f64) {
        self.crossing = Some(xc);
        self.fitted = None;
        self.pending = Some((zc, xc));
        self.after.clear();
        self.recent.clear();
    }

    pub fn finish_pending(&mut self) {
        if let Some((_, xc)) = self.pending.take() {
            self.fitted = self.fit(&self.after, xc);
            self.after.clear();
        }
    }

    fn fit(&self, pts: &[(f64, f64)], xc: f64) -> Option<f64> {
        fit_root(pts)
            .map(|root| root.max(self.floor))
            .filter(|&root| (root / xc).ln().abs() <= self.cell)
    }

    pub fn is_pending(&self) -> bool {
        self.pending.is_some()
    }

    pub fn best(&self) -> Option<f64> {
        self.fitted.or(self.crossing)
    }
}

/// Root of the least-squares line through `(x, sqrt(gap))`.
fn fit_root(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, q)| (a + x / n, b + q / n));
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, q) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (q - my);
    }
    if !(sxx > 0.0) || sxy == 0.0 {
        return None;
    }
    Some(mx - my * sxx / sxy)
}

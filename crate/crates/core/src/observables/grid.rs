/// Sampling grid `0, dt, 2 dt, ...` up to `t_end`. A grid time `g` sees
/// the configuration after every event at or before `g`.
#[derive(Clone, Debug)]
pub(crate) struct Grid {
    dt: f64,
    t_end: f64,
    next: u64,
}

impl Grid {
    pub(crate) fn new(dt: f64, t_end: f64) -> Self {
        Self { dt, t_end, next: 0 }
    }

    pub(crate) fn reset(&mut self) {
        self.next = 0;
    }

    /// Pops every grid time below `limit` (or equal to it if `inclusive`).
    pub(crate) fn pop_through(&mut self, limit: f64, inclusive: bool) -> impl Iterator<Item = f64> + '_ {
        std::iter::from_fn(move || {
            let g = self.next as f64 * self.dt;
            let ok = g <= self.t_end * (1.0 + 1e-12) && (g < limit || (inclusive && g <= limit));
            ok.then(|| {
                self.next += 1;
                g
            })
        })
    }
}

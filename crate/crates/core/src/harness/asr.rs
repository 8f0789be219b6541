use serde::{Deserialize, Serialize};

/// Points in every ASR grid.
pub const GRID_POINTS: usize = 50;

/// Divisor applied to query counts before they are placed on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalisation {
    Raw,
    /// Queries per node, for injection attacks.
    PerNode,
    /// Queries per squared node count.
    #[default]
    PerNodeSquared,
}

impl Normalisation {
    pub fn scale(self, n: usize) -> f64 {
        let n = n.max(1) as f64;
        match self {
            Normalisation::Raw => 1.0,
            Normalisation::PerNode => n,
            Normalisation::PerNodeSquared => n * n,
        }
    }
}

/// What the curve needs from one eligible graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub num_nodes: usize,
    pub budget: u64,
    /// Queries used by a successful attack.
    pub success_queries: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrCurve {
    pub normalisation: Normalisation,
    pub grid: Vec<f64>,
    pub asr: Vec<f64>,
}

impl AsrCurve {
    /// Cumulative success rate on a log-spaced grid from one query on the
    /// largest graph up to the largest normalised budget.
    pub fn from_points(points: &[CurvePoint], normalisation: Normalisation) -> Self {
        let scaled: Vec<(f64, Option<f64>)> = points
            .iter()
            .map(|p| {
                let s = normalisation.scale(p.num_nodes);
                (p.budget.max(1) as f64 / s, p.success_queries.map(|q| q as f64 / s))
            })
            .collect();
        if scaled.is_empty() {
            return Self { normalisation, grid: Vec::new(), asr: Vec::new() };
        }
        let lo = points.iter().map(|p| 1.0 / normalisation.scale(p.num_nodes)).fold(f64::INFINITY, f64::min);
        let hi = scaled.iter().flat_map(|&(b, q)| [Some(b), q]).flatten().fold(lo, f64::max);
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| if i + 1 == GRID_POINTS { hi } else { lo * (hi / lo).powf(i as f64 / (GRID_POINTS - 1) as f64) })
            .collect();
        let total = scaled.len() as f64;
        let asr = grid
            .iter()
            .map(|&x| scaled.iter().filter(|(_, q)| q.is_some_and(|q| q <= x)).count() as f64 / total)
            .collect();
        Self { normalisation, grid, asr }
    }

    pub fn final_asr(&self) -> f64 {
        self.asr.last().copied().unwrap_or(0.0)
    }

    /// Trapezoidal area under the curve over log-scaled queries, divided by
    /// the log range so it lies in `[0, 1]`.
    pub fn area(&self) -> f64 {
        if self.grid.len() < 2 {
            return self.final_asr();
        }
        let span = (self.grid[self.grid.len() - 1] / self.grid[0]).ln();
        if span <= 0.0 {
            return self.final_asr();
        }
        let mut total = 0.0;
        for i in 1..self.grid.len() {
            let w = (self.grid[i] / self.grid[i - 1]).ln();
            total += 0.5 * w * (self.asr[i] + self.asr[i - 1]);
        }
        total / span
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("normalised_queries,asr\n");
        for (x, y) in self.grid.iter().zip(&self.asr) {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_and_ends_at_success_rate() {
        let pts = [
            CurvePoint { num_nodes: 10, budget: 120, success_queries: Some(3) },
            CurvePoint { num_nodes: 20, budget: 480, success_queries: Some(400) },
            CurvePoint { num_nodes: 15, budget: 240, success_queries: None },
        ];
        for norm in [Normalisation::Raw, Normalisation::PerNode, Normalisation::PerNodeSquared] {
            let c = AsrCurve::from_points(&pts, norm);
            assert_eq!(c.grid.len(), GRID_POINTS);
            assert!(c.asr.windows(2).all(|w| w[1] >= w[0]));
            assert!(c.grid.windows(2).all(|w| w[1] > w[0]));
            assert_eq!(c.final_asr(), 2.0 / 3.0);
            assert!((0.0..=1.0).contains(&c.area()));
        }
    }

    #[test]
    fn empty_input_gives_empty_curve() {
        let c = AsrCurve::from_points(&[], Normalisation::Raw);
        assert!(c.grid.is_empty() && c.final_asr() == 0.0);
    }
}

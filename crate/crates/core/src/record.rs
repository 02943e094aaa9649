use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// `None` when no regret oracle was supplied.
    pub inst_regret: Option<f64>,
    pub cum_regret: Option<f64>,
    pub mean_bonus: f64,
    /// Largest distinct count of the bonus anchor across levels.
    pub subsample_distinct: usize,
    /// Whether any level discarded its subsample.
    pub discarded: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub config_hash: String,
    pub episodes: Vec<EpisodeRecord>,
}

impl ExperimentRecord {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn final_cum_regret(&self) -> f64 {
        self.episodes.last().and_then(|e| e.cum_regret).unwrap_or(0.0)
    }

    pub fn discard_count(&self) -> usize {
        self.episodes.iter().filter(|e| e.discarded).count()
    }

    /// Cumulative regret curve, zeros where regret is unknown.
    pub fn cum_regret_curve(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.cum_regret.unwrap_or(0.0)).collect()
    }
}

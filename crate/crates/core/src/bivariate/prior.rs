use libm::lgamma;
use serde::{Deserialize, Serialize};

use crate::model::{ChangepointConfig, Hyperparams, Metadata};

/// Counts of admissible times in the categories (1,1), (1,0), (0,1),
/// (0,0), split into undocumented and documented times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub undoc: [usize; 4],
    pub doc: [usize; 4],
}

/// Category index of an indicator pair.
pub fn category(first: bool, second: bool) -> usize {
    match (first, second) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

pub fn category_counts(config: &ChangepointConfig, metadata: &Metadata) -> CategoryCounts {
    let mut counts = CategoryCounts {
        undoc: [0; 4],
        doc: [0; 4],
    };
    let n_doc = metadata.len();
    counts.undoc[3] = config.positions() - n_doc;
    counts.doc[3] = n_doc;
    let mut times: Vec<usize> = config.times(0).iter().chain(config.times(1)).copied().collect();
    times.sort_unstable();
    times.dedup();
    for t in times {
        let cat = category(config.is_changepoint(0, t), config.is_changepoint(1, t));
        let bucket = if metadata.is_documented(t) {
            &mut counts.doc
        } else {
            &mut counts.undoc
        };
        bucket[cat] += 1;
        bucket[3] -= 1;
    }
    counts
}

/// Dirichlet-Multinomial code length
///
///   -sum_k sum_l log Gamma(alpha_l^(k) + m_l^(k)).
pub fn bivariate_prior_code_length(config: &ChangepointConfig, metadata: &Metadata, hp: &Hyperparams) -> f64 {
    let c = category_counts(config, metadata);
    let part =
        |alpha: &[f64; 4], m: &[usize; 4]| -> f64 { alpha.iter().zip(m).map(|(&a, &k)| lgamma(a + k as f64)).sum() };
    -(part(&hp.alpha_undoc, &c.undoc) + part(&hp.alpha_doc, &c.doc))
}

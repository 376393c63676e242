use libm::lgamma;

use crate::model::{classify_counts, ChangepointConfig, Hyperparams, Metadata};

/// Code length of the Beta-Binomial configuration prior with separate
/// rates for documented and undocumented times:
///
///   -sum_k log { Gamma(a + m_k) Gamma(b_k + N_k - m_k) }.
///
/// Constants that do not depend on the configuration are dropped.
pub fn prior_code_length(config: &ChangepointConfig, component: usize, metadata: &Metadata, hp: &Hyperparams) -> f64 {
    let c = classify_counts(config, component, metadata);
    let undoc = lgamma(hp.a + c.m_undoc as f64) + lgamma(hp.b_undoc + (c.n_undoc - c.m_undoc) as f64);
    let doc = lgamma(hp.a + c.m_doc as f64) + lgamma(hp.b_doc + (c.n_doc - c.m_doc) as f64);
    -(undoc + doc)
}

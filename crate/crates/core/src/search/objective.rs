use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bivariate::{bivariate_bmdl_score, bivariate_fitted_params};
use crate::error::{Error, Result};
use crate::model::{ChangepointConfig, FittedParams, Hyperparams, Metadata, ScoreBreakdown, SeriesData};
use crate::univariate::{bic_score, bmdl_score, fitted_params, mdl_score};

/// Objective minimized by the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// BMDL with the supplied hyperparameters.
    Bmdl,
    /// BMDL with a = b = 1 (flat Dirichlet in bivariate mode).
    Obmdl,
    /// Automatic MDL (univariate only).
    Mdl,
    /// BIC (univariate only).
    Bic,
}

impl Objective {
    pub const ALL: [Objective; 4] = [Objective::Bmdl, Objective::Obmdl, Objective::Mdl, Objective::Bic];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Bmdl => "bmdl",
            Objective::Obmdl => "obmdl",
            Objective::Mdl => "mdl",
            Objective::Bic => "bic",
        }
    }

    pub fn supports(self, components: usize) -> bool {
        components == 1 || matches!(self, Objective::Bmdl | Objective::Obmdl)
    }

    /// Whether metadata enters the objective.
    pub fn uses_metadata(self) -> bool {
        matches!(self, Objective::Bmdl)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnsupportedObjective(s.to_string()))
    }
}

/// Scores configurations of one data set under one objective.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    data: &'a SeriesData,
    metadata: Metadata,
    hp: Hyperparams,
    objective: Objective,
}

impl<'a> Scorer<'a> {
    pub fn new(data: &'a SeriesData, metadata: &Metadata, hp: &Hyperparams, objective: Objective) -> Result<Self> {
        if !objective.supports(data.components()) {
            return Err(Error::UnsupportedObjective(format!(
                "{objective} is only defined for univariate series"
            )));
        }
        metadata.check_range(data.len(), data.ar_order())?;
        let (metadata, hp) = match objective {
            Objective::Bmdl => {
                hp.validate(!metadata.is_empty())?;
                (metadata.clone(), *hp)
            }
            Objective::Obmdl => {
                hp.validate(false)?;
                (
                    Metadata::none(),
                    Hyperparams {
                        nu: hp.nu,
                        ..Hyperparams::objective()
                    },
                )
            }
            Objective::Mdl | Objective::Bic => (Metadata::none(), *hp),
        };
        Ok(Self {
            data,
            metadata,
            hp,
            objective,
        })
    }

    pub fn data(&self) -> &SeriesData {
        self.data
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    /// Hyperparameters actually used by the objective.
    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn score(&self, config: &ChangepointConfig) -> Result<ScoreBreakdown> {
        let bivariate = self.data.components() == 2;
        match (self.objective, bivariate) {
            (Objective::Bmdl | Objective::Obmdl, false) => bmdl_score(self.data, config, &self.metadata, &self.hp),
            (Objective::Bmdl | Objective::Obmdl, true) => {
                bivariate_bmdl_score(self.data, config, &self.metadata, &self.hp)
            }
            (Objective::Mdl, false) => mdl_score(self.data, config),
            (Objective::Bic, false) => bic_score(self.data, config),
            (o, true) => Err(Error::UnsupportedObjective(format!("{o} in bivariate mode"))),
        }
    }

    /// Parameter estimates at `config` under the scorer's prior scale.
    pub fn params(&self, config: &ChangepointConfig) -> Result<FittedParams> {
        if self.data.components() == 2 {
            bivariate_fitted_params(self.data, config, &self.hp)
        } else {
            fitted_params(self.data, config, &self.hp)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for o in Objective::ALL {
            assert_eq!(o.name().parse::<Objective>().unwrap(), o);
        }
        assert_eq!("BMDL".parse::<Objective>().unwrap(), Objective::Bmdl);
        assert!(matches!(
            "aic".parse::<Objective>(),
            Err(Error::UnsupportedObjective(_))
        ));
    }

    #[test]
    fn comparators_are_univariate_only() {
        let x: Vec<f64> = (0..60).map(|t| (t as f64 * 0.7).sin()).collect();
        let data = SeriesData::bivariate(x.clone(), x.iter().map(|v| v * v).collect(), 12, 1).unwrap();
        let hp = Hyperparams::default();
        assert!(Scorer::new(&data, &Metadata::none(), &hp, Objective::Bmdl).is_ok());
        assert!(matches!(
            Scorer::new(&data, &Metadata::none(), &hp, Objective::Mdl),
            Err(Error::UnsupportedObjective(_))
        ));
    }

    #[test]
    fn objective_bmdl_ignores_metadata() {
        let x: Vec<f64> = (0..120)
            .map(|t| (t as f64 * 0.7).sin() + (t as f64 * 1.3).cos())
            .collect();
        let data = SeriesData::univariate(x, 12, 1).unwrap();
        let meta = Metadata::new([50], 120, 1).unwrap();
        let hp = Hyperparams::default();
        let with = Scorer::new(&data, &meta, &hp, Objective::Obmdl).unwrap();
        let without = Scorer::new(&data, &Metadata::none(), &hp, Objective::Obmdl).unwrap();
        let c = ChangepointConfig::from_times(&[50], 120, 1).unwrap();
        assert_eq!(with.score(&c).unwrap(), without.score(&c).unwrap());
        assert_eq!(with.hyperparams().b_undoc, 1.0);
    }
}

//! Turns raw collector samples into one-second resource timelines and an
//! energy ledger.

mod clean;
mod coverage;
mod csv;
mod ledger;
mod resample;
mod timeline;

pub use self::csv::{read_timelines_csv, write_timelines_csv, MISSING_CPU, MISSING_MEM, MISSING_WATTS};
pub use clean::{clean, median, CleaningConfig, CleaningMethod};
pub use coverage::{coverage, CoverageReport};
pub use ledger::{attribute_energy, AggError, EnergyLedger};
pub use resample::{counter_rates, fill_gaps, resample, resample_raw, CounterRates, Grid, Point, Series};
pub use timeline::{assemble_timelines, AssemblyStats, ResourceTimeline, UNATTRIBUTED};

use crate::model::{LayerTag, Topology};

/// Decides which replicas belong to the system under test.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SutSelector {
    /// Allow-list of service names; empty admits every service.
    pub services: Vec<String>,
    pub infrastructure_prefixes: Vec<String>,
}

impl SutSelector {
    pub fn new(services: Vec<String>, infrastructure_prefixes: Vec<String>) -> Self {
        SutSelector {
            services,
            infrastructure_prefixes,
        }
    }

    pub fn is_infrastructure(&self, replica: &str, service: &str) -> bool {
        Topology::is_infrastructure(replica, &self.infrastructure_prefixes)
            || Topology::is_infrastructure(service, &self.infrastructure_prefixes)
    }

    pub fn matches(&self, replica: &str, service: &str, layer: LayerTag) -> bool {
        matches!(layer, LayerTag::Application | LayerTag::Service)
            && service != UNATTRIBUTED
            && !self.is_infrastructure(replica, service)
            && (self.services.is_empty() || self.services.iter().any(|s| s == service))
    }
}

//! A closed, serializable family of local events: predicates on per-region
//! masses and atom counts.

use serde::{Deserialize, Serialize};

use crate::configuration::{norm, Configuration};
use crate::geometry::Region;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    True,
    False,
    /// `V_region(eta) <= t`.
    TvMassAtMost { region: Region, t: f64 },
    /// `V_region(eta) > t`.
    TvMassAbove { region: Region, t: f64 },
    /// `|eta(region)| <= t`.
    VectorMassNormAtMost { region: Region, t: f64 },
    /// At most `n` atoms in `region`.
    CountAtMost { region: Region, n: usize },
    /// No atoms in `region`.
    Empty { region: Region },
    Not { event: Box<Event> },
    And { events: Vec<Event> },
    Or { events: Vec<Event> },
}

impl Event {
    /// Evaluate on a configuration; atoms absent from its window count as
    /// zero mass.
    pub fn holds(&self, eta: &Configuration) -> bool {
        fn inside<'a>(eta: &'a Configuration, r: &'a Region) -> impl Iterator<Item = crate::configuration::Atom<'a>> + 'a {
            eta.atoms().filter(move |a| r.contains(a.cube))
        }
        match self {
            Event::True => true,
            Event::False => false,
            Event::TvMassAtMost { region, t } => inside(eta, region).map(|a| norm(a.mark)).sum::<f64>() <= *t,
            Event::TvMassAbove { region, t } => inside(eta, region).map(|a| norm(a.mark)).sum::<f64>() > *t,
            Event::VectorMassNormAtMost { region, t } => {
                let mut s = vec![0.0; eta.dim()];
                for a in inside(eta, region) {
                    s.iter_mut().zip(a.mark).for_each(|(x, v)| *x += v);
                }
                norm(&s) <= *t
            }
            Event::CountAtMost { region, n } => inside(eta, region).count() <= *n,
            Event::Empty { region } => inside(eta, region).next().is_none(),
            Event::Not { event } => !event.holds(eta),
            Event::And { events } => events.iter().all(|e| e.holds(eta)),
            Event::Or { events } => events.iter().any(|e| e.holds(eta)),
        }
    }

    pub fn indicator(&self, eta: &Configuration) -> f64 {
        if self.holds(eta) {
            1.0
        } else {
            0.0
        }
    }

    /// Union of the regions the event looks at.
    pub fn regions(&self) -> Region {
        match self {
            Event::True | Event::False => Region::empty(),
            Event::TvMassAtMost { region, .. }
            | Event::TvMassAbove { region, .. }
            | Event::VectorMassNormAtMost { region, .. }
            | Event::CountAtMost { region, .. }
            | Event::Empty { region } => region.clone(),
            Event::Not { event } => event.regions(),
            Event::And { events } | Event::Or { events } => events.iter().fold(Region::empty(), |acc, e| acc.union(&e.regions())),
        }
    }
}

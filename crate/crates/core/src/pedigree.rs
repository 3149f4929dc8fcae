//! Explicit multigeneration family graphs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;
use crate::{Error, Result};

pub const DEFAULT_MAX_PERSONS: u64 = 20_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub person_id: u64,
    pub dynasty_id: u64,
    pub generation: u32,
    pub father_id: Option<u64>,
    pub mother_id: Option<u64>,
    pub spouse_id: Option<u64>,
    pub y: f64,
    /// Latent endowment (first endowment for the multiplicity model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    /// Second latent endowment, multiplicity model only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTopology {
    pub n_dynasties: u64,
    /// Observed generations, founders included.
    pub generations: u32,
    pub children_per_family: u32,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub max_persons: u64,
}

fn default_cap() -> u64 {
    DEFAULT_MAX_PERSONS
}

impl SimTopology {
    pub fn new(n_dynasties: u64, generations: u32, children_per_family: u32, seed: u64) -> Self {
        Self {
            n_dynasties,
            generations,
            children_per_family,
            seed,
            max_persons: DEFAULT_MAX_PERSONS,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_dynasties == 0 {
            return Err(Error::Topology("n_dynasties must be positive".into()));
        }
        if self.generations < 2 {
            return Err(Error::Topology("generations must be at least 2".into()));
        }
        if self.children_per_family == 0 {
            return Err(Error::Topology("children_per_family must be positive".into()));
        }
        Ok(())
    }

    /// Lineage persons per dynasty: `sum_g c^g`, plus one married-in spouse
    /// for every lineage person with children when `with_spouses` is set.
    pub fn persons_per_dynasty(&self, with_spouses: bool) -> Option<u64> {
        let c = self.children_per_family as u64;
        let mut level = 1u64;
        let mut total = 0u64;
        for g in 0..self.generations {
            total = total.checked_add(level)?;
            if with_spouses && g + 1 < self.generations {
                total = total.checked_add(level)?;
            }
            level = level.checked_mul(c)?;
        }
        Some(total)
    }

    pub fn total_persons(&self, with_spouses: bool) -> Option<u64> {
        self.persons_per_dynasty(with_spouses)?
            .checked_mul(self.n_dynasties)
    }
}

/// Which columns a panel carried; simulated panels carry all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Columns {
    pub mother_id: bool,
    pub spouse_id: bool,
    pub latent: bool,
}

impl Columns {
    pub const ALL: Columns = Columns {
        mother_id: true,
        spouse_id: true,
        latent: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncestorLine {
    #[default]
    Paternal,
    Maternal,
}

#[derive(Debug, Clone)]
pub struct Pedigree {
    persons: Vec<Person>,
    topology: Option<SimTopology>,
    model: Option<ModelSpec>,
    columns: Columns,
    index: HashMap<u64, usize>,
}

impl Pedigree {
    /// Builds a pedigree after checking ids, links and generation order.
    /// Errors carry the zero-based position of the offending record.
    pub fn from_persons(persons: Vec<Person>, columns: Columns) -> std::result::Result<Self, (usize, String)> {
        let mut index = HashMap::with_capacity(persons.len());
        for (i, p) in persons.iter().enumerate() {
            if index.insert(p.person_id, i).is_some() {
                return Err((i, format!("duplicate person_id {}", p.person_id)));
            }
        }
        for (i, p) in persons.iter().enumerate() {
            for (role, link) in [("father_id", p.father_id), ("mother_id", p.mother_id)] {
                let Some(id) = link else { continue };
                let Some(&j) = index.get(&id) else {
                    return Err((i, format!("{role} {id} does not refer to a known person")));
                };
                let parent = &persons[j];
                // Parents strictly precede children, so ancestry cannot cycle.
                if parent.generation + 1 != p.generation {
                    return Err((
                        i,
                        format!(
                            "generation {} inconsistent with {role} {id} in generation {}",
                            p.generation, parent.generation
                        ),
                    ));
                }
            }
            if let Some(id) = p.spouse_id {
                let Some(&j) = index.get(&id) else {
                    return Err((i, format!("spouse_id {id} does not refer to a known person")));
                };
                let s = &persons[j];
                if s.spouse_id != Some(p.person_id) {
                    return Err((i, format!("spouse link to {id} is not symmetric")));
                }
                if s.generation != p.generation {
                    return Err((i, format!("spouse {id} belongs to another generation")));
                }
            }
        }
        Ok(Self {
            persons,
            topology: None,
            model: None,
            columns,
            index,
        })
    }

    /// Simulator output is consistent by construction.
    pub(crate) fn from_simulation(persons: Vec<Person>, topology: SimTopology, model: ModelSpec) -> Self {
        let index = persons
            .iter()
            .enumerate()
            .map(|(i, p)| (p.person_id, i))
            .collect();
        Self {
            persons,
            topology: Some(topology),
            model: Some(model),
            columns: Columns::ALL,
            index,
        }
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn len(&self) -> usize {
        self.persons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.persons.is_empty()
    }

    pub fn topology(&self) -> Option<&SimTopology> {
        self.topology.as_ref()
    }

    pub fn model(&self) -> Option<&ModelSpec> {
        self.model.as_ref()
    }

    pub fn columns(&self) -> Columns {
        self.columns
    }

    pub fn index_of(&self, person_id: u64) -> Option<usize> {
        self.index.get(&person_id).copied()
    }

    pub fn get(&self, person_id: u64) -> Option<&Person> {
        self.index_of(person_id).map(|i| &self.persons[i])
    }

    pub fn father(&self, i: usize) -> Option<usize> {
        self.persons[i].father_id.and_then(|id| self.index_of(id))
    }

    pub fn mother(&self, i: usize) -> Option<usize> {
        self.persons[i].mother_id.and_then(|id| self.index_of(id))
    }

    pub fn spouse(&self, i: usize) -> Option<usize> {
        self.persons[i].spouse_id.and_then(|id| self.index_of(id))
    }

    /// Ancestor `k` steps up, always following the same parent role.
    pub fn ancestor(&self, i: usize, k: u32, line: AncestorLine) -> Option<usize> {
        let mut cur = i;
        for _ in 0..k {
            cur = match line {
                AncestorLine::Paternal => self.father(cur)?,
                AncestorLine::Maternal => self.mother(cur)?,
            };
        }
        Some(cur)
    }

    pub fn min_generation(&self) -> u32 {
        self.persons.iter().map(|p| p.generation).min().unwrap_or(0)
    }

    pub fn max_generation(&self) -> u32 {
        self.persons.iter().map(|p| p.generation).max().unwrap_or(0)
    }

    /// Number of distinct generation levels spanned by the panel.
    pub fn generation_count(&self) -> u32 {
        if self.persons.is_empty() {
            0
        } else {
            self.max_generation() - self.min_generation() + 1
        }
    }

    /// Outcomes as z-scores within each generation (population SD).
    pub fn standardized_y(&self) -> Vec<f64> {
        let mut sums: HashMap<u32, (f64, usize)> = HashMap::new();
        for p in &self.persons {
            let s = sums.entry(p.generation).or_insert((0.0, 0));
            s.0 += p.y;
            s.1 += 1;
        }
        let means: HashMap<u32, f64> = sums
            .iter()
            .map(|(&g, &(s, n))| (g, s / n as f64))
            .collect();
        let mut ss: HashMap<u32, f64> = HashMap::new();
        for p in &self.persons {
            let d = p.y - means[&p.generation];
            *ss.entry(p.generation).or_insert(0.0) += d * d;
        }
        self.persons
            .iter()
            .map(|p| {
                let n = sums[&p.generation].1 as f64;
                let sd = (ss[&p.generation] / n).sqrt();
                let d = p.y - means[&p.generation];
                if sd > 0.0 {
                    d / sd
                } else {
                    0.0
                }
            })
            .collect()
    }
}

impl PartialEq for Pedigree {
    fn eq(&self, other: &Self) -> bool {
        self.persons == other.persons
    }
}

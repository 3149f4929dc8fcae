//! Monte Carlo pedigree simulation.
//!
//! Dynasties evolve generation by generation. Within a step every dynasty
//! draws from its own `(seed, dynasty, step)` stream, so the panel is the same
//! whatever the number of worker threads. The poverty-trap model is
//! re-standardized across the whole population after every step; the other
//! families are normalized analytically.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::ModelSpec;
use crate::pedigree::{AncestorLine, Pedigree, Person, SimTopology};
use crate::rng::{self, normal, StreamKey};
use crate::{Error, Result};

/// Extra generations simulated and discarded before the founders of models
/// whose stationary law is not drawn directly (AR(2), poverty trap).
pub const BURN_IN: u32 = 10;

/// Spouse endowment with correlation `m` to `e_own` and a standard normal
/// marginal: `m e_own + sqrt(1 - m^2) z`.
pub fn spouse_draw<R: Rng + ?Sized>(e_own: f64, m: f64, rng: &mut R) -> Result<f64> {
    if !(m.abs() < 1.0) {
        return Err(Error::Argument(format!("|m| = {} must be < 1", m.abs())));
    }
    Ok(m * e_own + (1.0 - m * m).sqrt() * normal(rng))
}

#[derive(Debug, Clone, Copy, Default)]
struct Node {
    /// Position of the person inside its dynasty buffer.
    local: usize,
    y: f64,
    e: f64,
    e2: f64,
    /// Parent's outcome; the AR(2) model needs two lags.
    y_lag: f64,
}

struct Dynasty {
    id: u64,
    key: StreamKey,
    first_id: u64,
    persons: Vec<Person>,
    nodes: Vec<Node>,
}

impl Dynasty {
    fn push(&mut self, generation: u32, father: Option<usize>, mother: Option<usize>, y: f64) -> usize {
        let local = self.persons.len();
        let first_id = self.first_id;
        let id_of = |l: usize| first_id + l as u64;
        self.persons.push(Person {
            person_id: id_of(local),
            dynasty_id: self.id,
            generation,
            father_id: father.map(id_of),
            mother_id: mother.map(id_of),
            spouse_id: None,
            y,
            e: None,
            e2: None,
        });
        local
    }

    fn record(&mut self, node: &mut Node, generation: u32, father: Option<usize>, mother: Option<usize>, spec: &ModelSpec) {
        let local = self.push(generation, father, mother, node.y);
        node.local = local;
        let p = &mut self.persons[local];
        match spec {
            ModelSpec::LatentFactor(_) | ModelSpec::Assortative(_) => p.e = Some(node.e),
            ModelSpec::Multiplicity(_) => {
                p.e = Some(node.e);
                p.e2 = Some(node.e2);
            }
            ModelSpec::GrandparentAR2(_) | ModelSpec::PovertyTrap(_) => {}
        }
    }
}

/// Stationary (or burn-in starting) state of a founder.
fn founder_state(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Node {
    let mut n = Node::default();
    match spec {
        ModelSpec::LatentFactor(p) => {
            n.e = normal(rng);
            n.y = p.returns_rho * n.e + p.u_variance().sqrt() * normal(rng);
        }
        ModelSpec::Assortative(p) => {
            n.e = normal(rng);
            n.y = p.returns_rho * n.e + p.u_variance().sqrt() * normal(rng);
        }
        ModelSpec::Multiplicity(p) => {
            n.e = normal(rng);
            n.e2 = normal(rng);
            n.y = p.rho1_sq.sqrt() * n.e + p.rho2_sq.sqrt() * n.e2 + p.u_variance().sqrt() * normal(rng);
        }
        ModelSpec::GrandparentAR2(_) => {
            n.y_lag = normal(rng);
            n.y = normal(rng);
        }
        ModelSpec::PovertyTrap(_) => n.y = normal(rng),
    }
    n
}

/// Children of one parent node. Draw order per family is fixed: shared
/// shocks first, then per child.
fn children(spec: &ModelSpec, parent: &Node, spouse_e: f64, count: u32, rng: &mut ChaCha8Rng, out: &mut Vec<Node>) {
    match spec {
        ModelSpec::LatentFactor(p) => {
            let (su, sv) = (p.sibling_shared_u, p.sibling_shared_v);
            let shared_v = normal(rng);
            let shared_u = normal(rng);
            let (sd_u, sd_v) = (p.u_variance().sqrt(), p.v_variance().sqrt());
            for _ in 0..count {
                let v = sv.sqrt() * shared_v + (1.0 - sv).sqrt() * normal(rng);
                let u = su.sqrt() * shared_u + (1.0 - su).sqrt() * normal(rng);
                let e = p.transferability_lambda * parent.e + sd_v * v;
                out.push(Node {
                    y: p.returns_rho * e + sd_u * u,
                    e,
                    ..Node::default()
                });
            }
        }
        ModelSpec::GrandparentAR2(p) => {
            let sd = p.shock_variance().sqrt();
            for _ in 0..count {
                out.push(Node {
                    y: p.gamma_p * parent.y + p.gamma_gp * parent.y_lag + sd * normal(rng),
                    y_lag: parent.y,
                    ..Node::default()
                });
            }
        }
        ModelSpec::Multiplicity(p) => {
            let (s1, s2) = (
                (1.0 - p.lambda1 * p.lambda1).sqrt(),
                (1.0 - p.lambda2 * p.lambda2).sqrt(),
            );
            let (r1, r2, ru) = (p.rho1_sq.sqrt(), p.rho2_sq.sqrt(), p.u_variance().sqrt());
            for _ in 0..count {
                let e = p.lambda1 * parent.e + s1 * normal(rng);
                let e2 = p.lambda2 * parent.e2 + s2 * normal(rng);
                out.push(Node {
                    y: r1 * e + r2 * e2 + ru * normal(rng),
                    e,
                    e2,
                    ..Node::default()
                });
            }
        }
        ModelSpec::PovertyTrap(p) => {
            let mean = p.transition(parent.y);
            for _ in 0..count {
                out.push(Node {
                    y: mean + p.shock_sd * normal(rng),
                    ..Node::default()
                });
            }
        }
        ModelSpec::Assortative(p) => {
            let avg = (parent.e + spouse_e) / 2.0;
            let (sd_u, sd_v) = (p.u_variance().sqrt(), p.v_variance().sqrt());
            for _ in 0..count {
                let e = p.transferability_lambda_tilde * avg + sd_v * normal(rng);
                out.push(Node {
                    y: p.returns_rho * e + sd_u * normal(rng),
                    e,
                    ..Node::default()
                });
            }
        }
    }
}

fn standardize_nodes(dynasties: &mut [Dynasty], sync_persons: bool) {
    let n: usize = dynasties.iter().map(|d| d.nodes.len()).sum();
    if n == 0 {
        return;
    }
    let mean = dynasties
        .iter()
        .flat_map(|d| d.nodes.iter())
        .map(|x| x.y)
        .sum::<f64>()
        / n as f64;
    let var = dynasties
        .iter()
        .flat_map(|d| d.nodes.iter())
        .map(|x| (x.y - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return;
    }
    dynasties.par_iter_mut().for_each(|d| {
        for node in d.nodes.iter_mut() {
            node.y = (node.y - mean) / sd;
            if sync_persons {
                d.persons[node.local].y = node.y;
            }
        }
    });
}

/// Simulates `topo.n_dynasties` dynasties under `spec`.
pub fn simulate(spec: &ModelSpec, topo: &SimTopology) -> Result<Pedigree> {
    spec.check()?;
    topo.check()?;
    let two_parent = spec.parents_per_child() == 2;
    let per_dynasty = topo
        .persons_per_dynasty(two_parent)
        .ok_or(Error::MemoryCap {
            requested: u64::MAX,
            cap: topo.max_persons,
        })?;
    let total = per_dynasty
        .checked_mul(topo.n_dynasties)
        .unwrap_or(u64::MAX);
    if total > topo.max_persons {
        return Err(Error::MemoryCap {
            requested: total,
            cap: topo.max_persons,
        });
    }

    let burn_in = match spec {
        ModelSpec::GrandparentAR2(_) | ModelSpec::PovertyTrap(_) => BURN_IN,
        _ => 0,
    };
    let restandardize = matches!(spec, ModelSpec::PovertyTrap(_));

    let mut dynasties: Vec<Dynasty> = (0..topo.n_dynasties)
        .into_par_iter()
        .map(|d| {
            let key = rng::dynasty_key(topo.seed, d);
            let mut rng = rng::stream(&key, 0);
            let node = founder_state(spec, &mut rng);
            Dynasty {
                id: d,
                key,
                first_id: d * per_dynasty,
                persons: Vec::with_capacity(per_dynasty as usize),
                nodes: vec![node],
            }
        })
        .collect();
    if restandardize {
        standardize_nodes(&mut dynasties, false);
    }

    // Single-lineage burn-in; nothing is recorded.
    for step in 1..=burn_in as u64 {
        dynasties.par_iter_mut().for_each(|d| {
            let mut rng = rng::stream(&d.key, step);
            let mut next = Vec::with_capacity(1);
            children(spec, &d.nodes[0], 0.0, 1, &mut rng, &mut next);
            d.nodes = next;
        });
        if restandardize {
            standardize_nodes(&mut dynasties, false);
        }
    }

    dynasties.par_iter_mut().for_each(|d| {
        let mut node = d.nodes[0];
        d.record(&mut node, 0, None, None, spec);
        d.nodes[0] = node;
    });

    let c = topo.children_per_family;
    for g in 1..topo.generations {
        let step = burn_in as u64 + g as u64;
        dynasties.par_iter_mut().for_each(|d| {
            let mut rng = rng::stream(&d.key, step);
            let parents = std::mem::take(&mut d.nodes);
            let mut next = Vec::with_capacity(parents.len() * c as usize);
            for parent in &parents {
                let mut spouse_e = 0.0;
                let mut mother = None;
                if let ModelSpec::Assortative(p) = spec {
                    spouse_e = spouse_draw(parent.e, p.assortative_m, &mut rng)
                        .expect("m validated");
                    let mut s = Node {
                        e: spouse_e,
                        y: p.returns_rho * spouse_e + p.u_variance().sqrt() * normal(&mut rng),
                        ..Node::default()
                    };
                    d.record(&mut s, g - 1, None, None, spec);
                    let (a, b) = (parent.local, s.local);
                    d.persons[a].spouse_id = Some(d.persons[b].person_id);
                    d.persons[b].spouse_id = Some(d.persons[a].person_id);
                    mother = Some(s.local);
                }
                let start = next.len();
                children(spec, parent, spouse_e, c, &mut rng, &mut next);
                for child in &mut next[start..] {
                    d.record(child, g, Some(parent.local), mother, spec);
                }
            }
            d.nodes = next;
        });
        if restandardize {
            standardize_nodes(&mut dynasties, true);
        }
    }

    let mut persons = Vec::with_capacity(total as usize);
    for d in dynasties {
        debug_assert_eq!(d.persons.len() as u64, per_dynasty);
        persons.extend(d.persons);
    }
    Ok(Pedigree::from_simulation(persons, *topo, *spec))
}

/// `P(y < ybar at distance k | founder y < ybar)` for k = 0..=max_k, over
/// paternal-line descendants of the founder generation, on per-generation
/// standardized outcomes.
pub fn poverty_persistence_curve(ped: &Pedigree, ybar: f64, max_k: u32) -> Result<Vec<f64>> {
    if max_k >= ped.generation_count() {
        return Err(Error::Argument(format!(
            "max_k = {max_k} must be below the {} generations in the panel",
            ped.generation_count()
        )));
    }
    let z = ped.standardized_y();
    let g0 = ped.min_generation();
    let founder_poor = ped
        .persons()
        .iter()
        .enumerate()
        .filter(|(i, p)| p.generation == g0 && ped.father(*i).is_none() && z[*i] < ybar)
        .count();
    if founder_poor == 0 {
        return Err(Error::InsufficientData(format!(
            "no founder below ybar = {ybar}; the conditional probability is undefined"
        )));
    }
    let mut poor = vec![0usize; max_k as usize + 1];
    let mut total = vec![0usize; max_k as usize + 1];
    for (i, p) in ped.persons().iter().enumerate() {
        let k = p.generation - g0;
        if k > max_k {
            continue;
        }
        let Some(a) = ped.ancestor(i, k, AncestorLine::Paternal) else {
            continue;
        };
        if ped.persons()[a].generation != g0 || ped.father(a).is_some() || z[a] >= ybar {
            continue;
        }
        total[k as usize] += 1;
        if z[i] < ybar {
            poor[k as usize] += 1;
        }
    }
    Ok(poor
        .iter()
        .zip(&total)
        .map(|(&p, &t)| if t == 0 { f64::NAN } else { p as f64 / t as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn lf() -> ModelSpec {
        ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 0.7))
    }

    #[test]
    fn person_counts() {
        for spec in [
            lf(),
            ModelSpec::GrandparentAR2(GrandparentAR2Params::new(0.4, 0.2)),
            ModelSpec::Multiplicity(MultiplicityParams::new(0.3, 0.7, 0.9, 0.5)),
            ModelSpec::PovertyTrap(PovertyTrapParams::new(0.9, 0.2, -0.3)),
        ] {
            let ped = simulate(&spec, &SimTopology::new(25, 2, 1, 3)).unwrap();
            assert_eq!(ped.len(), 50, "{}", spec.name());
        }
        let ped = simulate(&lf(), &SimTopology::new(4, 3, 3, 1)).unwrap();
        assert_eq!(ped.len(), 4 * 13);
        let a = ModelSpec::Assortative(AssortativeParams::new(0.8, 0.7, 0.5));
        let ped = simulate(&a, &SimTopology::new(4, 3, 2, 1)).unwrap();
        assert_eq!(ped.len(), 4 * (7 + 3));
    }

    #[test]
    fn memory_cap_and_topology_errors() {
        let mut t = SimTopology::new(1000, 5, 2, 0);
        t.max_persons = 1000;
        assert!(matches!(simulate(&lf(), &t), Err(Error::MemoryCap { .. })));
        assert!(matches!(
            simulate(&lf(), &SimTopology::new(10, 1, 1, 0)),
            Err(Error::Topology(_))
        ));
        let bad = ModelSpec::LatentFactor(LatentFactorParams::new(0.8, 1.0));
        assert!(matches!(
            simulate(&bad, &SimTopology::new(10, 2, 1, 0)),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn links_are_consistent() {
        let a = ModelSpec::Assortative(AssortativeParams::new(0.8, 0.7, 0.5));
        let ped = simulate(&a, &SimTopology::new(3, 3, 2, 9)).unwrap();
        let again = Pedigree::from_persons(ped.persons().to_vec(), ped.columns());
        assert!(again.is_ok());
        for (i, p) in ped.persons().iter().enumerate() {
            if p.father_id.is_some() {
                assert!(p.mother_id.is_some());
                assert_eq!(ped.spouse(ped.father(i).unwrap()), ped.mother(i));
            } else if p.generation > 0 {
                // Married-in spouse: no parents, linked to a lineage member.
                let s = ped.spouse(i).expect("spouse link");
                assert!(ped.persons()[s].father_id.is_some());
            }
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let t = SimTopology::new(50, 4, 2, 11);
        let a = simulate(&lf(), &t).unwrap();
        let b = simulate(&lf(), &t).unwrap();
        assert_eq!(a, b);
        let c = simulate(&lf(), &SimTopology::new(50, 4, 2, 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn poverty_trap_standardized_each_generation() {
        let spec = ModelSpec::PovertyTrap(PovertyTrapParams::new(0.9, 0.2, -0.3));
        let ped = simulate(&spec, &SimTopology::new(2000, 4, 1, 5)).unwrap();
        for g in 0..4 {
            let ys: Vec<f64> = ped.persons().iter().filter(|p| p.generation == g).map(|p| p.y).collect();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12, "g={g}: {mean} {var}");
        }
    }

    #[test]
    fn spouse_draw_bounds() {
        let mut rng = rng::stream(&rng::dynasty_key(0, 0), 0);
        assert!(spouse_draw(0.3, 1.0, &mut rng).is_err());
        assert!(spouse_draw(0.3, -1.0, &mut rng).is_err());
        // m = 0 ignores the own endowment entirely.
        let mut r1 = rng::stream(&rng::dynasty_key(1, 0), 0);
        let mut r2 = rng::stream(&rng::dynasty_key(1, 0), 0);
        assert_eq!(spouse_draw(5.0, 0.0, &mut r1).unwrap(), spouse_draw(-5.0, 0.0, &mut r2).unwrap());
    }

    #[test]
    fn persistence_curve_basics() {
        let spec = ModelSpec::PovertyTrap(PovertyTrapParams::new(0.9, 0.2, -0.3));
        let ped = simulate(&spec, &SimTopology::new(500, 4, 1, 2)).unwrap();
        let curve = poverty_persistence_curve(&ped, -0.3, 3).unwrap();
        assert_eq!(curve.len(), 4);
        assert_eq!(curve[0], 1.0);
        assert!(poverty_persistence_curve(&ped, -0.3, 4).is_err());
        assert!(matches!(
            poverty_persistence_curve(&ped, -100.0, 2),
            Err(Error::InsufficientData(_))
        ));
    }
}

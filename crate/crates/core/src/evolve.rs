//! The (mu+1)-EA, (mu+1)-GA and (mu+1)-GA-NoCopy as one parameterized
//! generation step.
//!
//! Each generation creates one offspring, either by standard bit mutation of
//! a uniformly chosen member or by uniform crossover of two members, and then
//! removes a worst individual among the mu+1 under the current round, breaking
//! ties uniformly at random.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::bitstring::Bitstring;
use crate::environments::{Environment, EnvironmentSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::RandomSource;
use crate::variation::{crossover_into, Mutation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Ea,
    /// Crossover parents drawn independently, so a member may be paired with itself.
    Ga,
    /// Crossover parents drawn without repetition.
    GaNoCopy,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ea => "EA",
            Variant::Ga => "GA",
            Variant::GaNoCopy => "GA-NoCopy",
        }
    }

    /// Stable small integer used when deriving seeds.
    pub fn code(self) -> u64 {
        match self {
            Variant::Ea => 1,
            Variant::Ga => 2,
            Variant::GaNoCopy => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ea" => Ok(Variant::Ea),
            "ga" => Ok(Variant::Ga),
            "ga-nocopy" | "ga_nocopy" | "ganocopy" => Ok(Variant::GaNoCopy),
            _ => Err(invalid(format!(
                "unknown variant {s:?} (expected EA, GA or GA-NoCopy)"
            ))),
        }
    }
}

pub const DEFAULT_CROSSOVER_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmConfig {
    pub mu: usize,
    pub c: f64,
    pub variant: Variant,
    /// Ignored by the EA.
    pub crossover_probability: f64,
}

impl AlgorithmConfig {
    pub fn new(variant: Variant, mu: usize, c: f64) -> Result<Self> {
        let config = Self {
            mu,
            c,
            variant,
            crossover_probability: DEFAULT_CROSSOVER_PROBABILITY,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn ea(mu: usize, c: f64) -> Result<Self> {
        Self::new(Variant::Ea, mu, c)
    }

    pub fn ga(mu: usize, c: f64) -> Result<Self> {
        Self::new(Variant::Ga, mu, c)
    }

    pub fn ga_nocopy(mu: usize, c: f64) -> Result<Self> {
        Self::new(Variant::GaNoCopy, mu, c)
    }

    pub fn with_crossover_probability(mut self, p: f64) -> Result<Self> {
        self.crossover_probability = p;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 {
            return Err(invalid("mu must be at least 1"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("mutation parameter c must be positive, got {}", self.c)));
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return Err(invalid(format!(
                "crossover probability {} outside [0, 1]",
                self.crossover_probability
            )));
        }
        if self.variant == Variant::GaNoCopy && self.mu < 2 {
            return Err(invalid("GA-NoCopy needs mu >= 2"));
        }
        Ok(())
    }

    /// E.g. `(2+1)-GA`.
    pub fn label(&self) -> String {
        format!("({}+1)-{}", self.mu, self.variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffspringKind {
    Mutation,
    Crossover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    pub offspring_kind: OffspringKind,
    /// The offspring survived selection.
    pub accepted: bool,
    /// The offspring equals some member of the pre-step population.
    pub offspring_is_copy: bool,
    /// Set when the population's best ones-count rose in this step.
    pub new_best_ones: Option<usize>,
}

/// A multiset of mu bitstrings plus one scratch slot for the offspring.
#[derive(Debug, Clone)]
pub struct PopulationState {
    slots: Vec<Bitstring>,
    mu: usize,
    generation: u64,
}

impl PopulationState {
    pub fn from_members(members: Vec<Bitstring>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(invalid("population needs at least one member"));
        };
        let n = first.len();
        if let Some(bad) = members.iter().find(|m| m.len() != n) {
            return Err(Error::LengthMismatch {
                left: bad.len(),
                right: n,
            });
        }
        let mu = members.len();
        let mut slots = members;
        slots.push(slots[0].clone());
        Ok(Self {
            slots,
            mu,
            generation: 0,
        })
    }

    pub fn members(&self) -> &[Bitstring] {
        &self.slots[..self.mu]
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn len(&self) -> usize {
        self.slots[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn best_ones(&self) -> usize {
        self.members().iter().map(Bitstring::ones).max().unwrap()
    }

    pub fn has_optimum(&self) -> bool {
        self.best_ones() == self.len()
    }

    /// True iff all members are bit-identical.
    pub fn is_degenerate(&self) -> bool {
        let members = self.members();
        members[1..].iter().all(|m| m == &members[0])
    }
}

pub fn is_degenerate(state: &PopulationState) -> bool {
    state.is_degenerate()
}

/// One run's outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    /// Generations used; equal to the cap on failure.
    pub generations: u64,
    pub success: bool,
    /// First generation at which the best ones-count reached each level.
    pub first_hit: BTreeMap<usize, u64>,
    pub seed: u64,
}

/// An [`AlgorithmConfig`] bound to a string length.
#[derive(Debug, Clone)]
pub struct Algorithm {
    config: AlgorithmConfig,
    n: usize,
    mutation: Mutation,
}

impl Algorithm {
    pub fn new(config: AlgorithmConfig, n: usize) -> Result<Self> {
        config.validate()?;
        let mutation = Mutation::new(n, config.c)?;
        Ok(Self {
            config,
            n,
            mutation,
        })
    }

    pub fn config(&self) -> &AlgorithmConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// mu independent uniform strings.
    pub fn init_population(&self, rng: &mut RandomSource) -> Result<PopulationState> {
        let members = (0..self.config.mu)
            .map(|_| Bitstring::new_uniform(self.n, rng))
            .collect::<Result<Vec<_>>>()?;
        PopulationState::from_members(members)
    }

    /// Degenerate population of mu copies of `x`.
    pub fn degenerate_population(&self, x: &Bitstring) -> Result<PopulationState> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: self.n,
            });
        }
        PopulationState::from_members(vec![x.clone(); self.config.mu])
    }

    /// Advances `state` by one generation under `env`.
    pub fn step(
        &self,
        state: &mut PopulationState,
        env: &mut Environment,
        rng: &mut RandomSource,
    ) -> Result<StepEvent> {
        let mu = self.config.mu;
        if state.mu != mu {
            return Err(invalid(format!(
                "population has {} members, algorithm expects {mu}",
                state.mu
            )));
        }
        if state.len() != self.n || env.len() != self.n {
            return Err(Error::LengthMismatch {
                left: state.len(),
                right: self.n,
            });
        }
        let best_before = state.best_ones();
        let generation = state.generation + 1;

        let p = self.config.crossover_probability;
        let crossover = self.config.variant != Variant::Ea && p > 0.0 && rng.bernoulli(p);
        let (members, spare) = state.slots.split_at_mut(mu);
        let child = &mut spare[0];
        let kind = if crossover {
            let i = rng.below(mu);
            let j = match self.config.variant {
                Variant::GaNoCopy => {
                    let j = rng.below(mu - 1);
                    if j >= i {
                        j + 1
                    } else {
                        j
                    }
                }
                _ => rng.below(mu),
            };
            crossover_into(&members[i], &members[j], child, rng)?;
            OffspringKind::Crossover
        } else {
            let parent = &members[rng.below(mu)];
            self.mutation.apply_into(parent, child, rng)?;
            OffspringKind::Mutation
        };
        let offspring_is_copy = members.iter().any(|m| m.ones() == child.ones() && m == &*child);

        let worst = env.select_worst(generation, &state.slots, rng)?;
        let accepted = worst != mu;
        if accepted {
            state.slots.swap(worst, mu);
        }
        state.generation = generation;
        let best_after = state.best_ones();
        Ok(StepEvent {
            offspring_kind: kind,
            accepted,
            offspring_is_copy,
            new_best_ones: (best_after > best_before).then_some(best_after),
        })
    }

    /// Steps until some member is all-ones or `limit` generations elapse.
    ///
    /// A population that starts with the optimum succeeds at generation 0.
    pub fn run(&self, spec: &EnvironmentSpec, limit: u64, rng: &mut RandomSource) -> Result<RunRecord> {
        if limit == 0 {
            return Err(invalid("generation limit must be at least 1"));
        }
        let seed = rng.seed();
        let mut env = Environment::new(spec.clone(), self.n)?;
        let mut state = self.init_population(rng)?;
        let mut first_hit = BTreeMap::new();
        let mut record_level = state.best_ones();
        first_hit.insert(record_level, 0);
        if state.has_optimum() {
            return Ok(RunRecord {
                generations: 0,
                success: true,
                first_hit,
                seed,
            });
        }
        while state.generation < limit {
            let event = self.step(&mut state, &mut env, rng)?;
            if let Some(best) = event.new_best_ones {
                if best > record_level {
                    for level in record_level + 1..=best {
                        first_hit.insert(level, state.generation);
                    }
                    record_level = best;
                }
                if best == self.n {
                    return Ok(RunRecord {
                        generations: state.generation,
                        success: true,
                        first_hit,
                        seed,
                    });
                }
            }
        }
        Ok(RunRecord {
            generations: limit,
            success: false,
            first_hit,
            seed,
        })
    }
}

pub fn init_population(config: &AlgorithmConfig, n: usize, rng: &mut RandomSource) -> Result<PopulationState> {
    Algorithm::new(*config, n)?.init_population(rng)
}

pub fn run(
    config: &AlgorithmConfig,
    spec: &EnvironmentSpec,
    n: usize,
    limit: u64,
    rng: &mut RandomSource,
) -> Result<RunRecord> {
    Algorithm::new(*config, n)?.run(spec, limit, rng)
}

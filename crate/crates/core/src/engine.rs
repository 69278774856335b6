//! Discrete-time diffusion on a fixed follower network.
//!
//! Each step activates `N` agents. An active agent either posts a fresh
//! message or tries to re-share one from its feed; a re-share may be stopped
//! by a friction prompt, and agents that have seen a prompt may pick by
//! quality instead of engagement.

use std::collections::VecDeque;

use thiserror::Error;

use crate::netgen::Network;
use crate::sampling::{Choice, RandomSource};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` = {value} is out of range ({expected})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

/// How the `N` activations of a step are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    /// `N` independent uniform draws; an agent may act several times.
    #[default]
    WithReplacement,
    /// A fresh random permutation; every agent acts exactly once.
    Permutation,
}

/// Which posts enter the popularity/quality rank correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauPopulation {
    /// Every post created during the run.
    #[default]
    AllPosts,
    /// Only posts still present in at least one feed at the end.
    InFeeds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub n: usize,
    pub m: usize,
    pub post_probability: f64,
    pub feed_capacity: usize,
    pub friction: f64,
    pub learning: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub clustering_target: f64,
    pub seed: u64,
    /// Steps before the convergence test is allowed to fire.
    pub warmup: u64,
    /// Runs still unconverged after this many steps fail.
    pub step_cap: u64,
    pub activation: Activation,
    pub tau_population: TauPopulation,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n: 1000,
            m: 3,
            post_probability: 0.5,
            feed_capacity: 15,
            friction: 0.0,
            learning: 0.0,
            rho: 0.99,
            epsilon: 1e-5,
            clustering_target: 0.29,
            seed: 42,
            warmup: 500,
            step_cap: 100_000,
            activation: Activation::WithReplacement,
            tau_population: TauPopulation::AllPosts,
        }
    }
}

impl SimParams {
    pub fn with_intervention(&self, friction: f64, learning: f64) -> Self {
        Self {
            friction,
            learning,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let unit = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(ParamError::OutOfRange { name, value, expected: "[0, 1]" })
            }
        };
        unit("p", self.post_probability)?;
        unit("f", self.friction)?;
        unit("ell", self.learning)?;
        unit("rho", self.rho)?;
        if !(self.epsilon > 0.0) {
            return Err(ParamError::OutOfRange {
                name: "epsilon",
                value: self.epsilon,
                expected: "> 0",
            });
        }
        if !(self.clustering_target > 0.0 && self.clustering_target < 1.0) {
            return Err(ParamError::OutOfRange {
                name: "clustering_target",
                value: self.clustering_target,
                expected: "(0, 1)",
            });
        }
        if self.feed_capacity < 1 {
            return Err(ParamError::OutOfRange {
                name: "alpha",
                value: self.feed_capacity as f64,
                expected: ">= 1",
            });
        }
        if self.n < 1 {
            return Err(ParamError::OutOfRange { name: "n", value: 0.0, expected: ">= 1" });
        }
        if self.m < 1 {
            return Err(ParamError::OutOfRange { name: "m", value: 0.0, expected: ">= 1" });
        }
        if self.step_cap < 1 {
            return Err(ParamError::OutOfRange {
                name: "step_cap",
                value: 0.0,
                expected: ">= 1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PostId(pub u32);

#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub id: PostId,
    pub quality: f64,
    pub engagement: f64,
    pub author: u32,
    pub created_step: u64,
    /// Share events, counting the original posting.
    pub popularity: u32,
}

/// Newest-first list of post references, at most `capacity` long.
#[derive(Debug, Clone, PartialEq)]
pub struct Feed {
    entries: VecDeque<PostId>,
    capacity: usize,
}

impl Feed {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    /// Put `id` on top, dropping the oldest entry if the feed overflows.
    pub fn push(&mut self, id: PostId) {
        self.entries.push_front(id);
        if self.entries.len() > self.capacity {
            self.entries.pop_back();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = PostId> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, i: usize) -> Option<PostId> {
        self.entries.get(i).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgentState {
    pub friction_exposed: bool,
}

/// What one activation did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Posted(PostId),
    Reshared(PostId),
    /// Stopped by a friction prompt.
    Blocked,
    /// Share branch with nothing selectable: empty feed or all-zero weights.
    Refrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub posts: u64,
    pub reshares: u64,
    pub blocked: u64,
    pub refrained: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub step: u64,
    pub agent: u32,
    pub action: Action,
}

pub struct SimState<'a> {
    network: &'a Network,
    params: SimParams,
    feeds: Vec<Feed>,
    posts: Vec<Post>,
    agents: Vec<AgentState>,
    step: u64,
    rng: RandomSource,
    counters: Counters,
    trace: Option<Vec<Event>>,
    weights: Vec<f64>,
    order: Vec<u32>,
}

impl<'a> SimState<'a> {
    /// Empty feeds, no posts, nobody exposed.
    pub fn new(network: &'a Network, params: SimParams, seed: u64) -> Result<Self, ParamError> {
        params.validate()?;
        if network.n() != params.n {
            return Err(ParamError::OutOfRange {
                name: "n",
                value: params.n as f64,
                expected: "equal to the network size",
            });
        }
        let n = params.n;
        let alpha = params.feed_capacity;
        Ok(Self {
            network,
            feeds: vec![Feed::new(alpha); n],
            posts: Vec::new(),
            agents: vec![AgentState::default(); n],
            step: 0,
            rng: RandomSource::new(seed),
            counters: Counters::default(),
            trace: None,
            weights: Vec::with_capacity(alpha),
            order: (0..n as u32).collect(),
            params,
        })
    }

    /// Record every activation outcome from now on.
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[Event]> {
        self.trace.as_deref()
    }

    pub fn network(&self) -> &Network {
        self.network
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn feeds(&self) -> &[Feed] {
        &self.feeds
    }

    pub fn feed(&self, agent: usize) -> &Feed {
        &self.feeds[agent]
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn post(&self, id: PostId) -> &Post {
        &self.posts[id.0 as usize]
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Activate `N` agents in turn, then advance the clock.
    pub fn step(&mut self) {
        let n = self.params.n;
        match self.params.activation {
            Activation::WithReplacement => {
                for _ in 0..n {
                    let agent = self.rng.index(n);
                    self.act(agent);
                }
            }
            Activation::Permutation => {
                // Fisher-Yates over the persistent order buffer.
                for i in (1..n).rev() {
                    let j = self.rng.index(i + 1);
                    self.order.swap(i, j);
                }
                for i in 0..n {
                    let agent = self.order[i] as usize;
                    self.act(agent);
                }
            }
        }
        self.step += 1;
    }

    /// One activation: post with probability `p`, otherwise try to re-share.
    pub fn act(&mut self, agent: usize) -> Action {
        let p = self.params.post_probability;
        let action = if self.draw(p) {
            Action::Posted(self.create_post(agent))
        } else {
            self.try_share(agent)
        };
        if let Some(trace) = &mut self.trace {
            trace.push(Event {
                step: self.step,
                agent: agent as u32,
                action,
            });
        }
        action
    }

    /// Share branch: friction gate, then engagement- or quality-weighted pick.
    pub fn try_share(&mut self, agent: usize) -> Action {
        let f = self.params.friction;
        if self.draw(f) {
            self.agents[agent].friction_exposed = true;
            self.counters.blocked += 1;
            return Action::Blocked;
        }
        if self.feeds[agent].is_empty() {
            self.counters.refrained += 1;
            return Action::Refrained;
        }
        // Only exposed agents draw the learning coin, so with no exposure
        // the random stream is independent of ell.
        let by_quality = self.agents[agent].friction_exposed && self.draw(self.params.learning);
        self.weights.clear();
        for id in self.feeds[agent].iter() {
            let post = &self.posts[id.0 as usize];
            self.weights.push(if by_quality { post.quality } else { post.engagement });
        }
        let choice = self
            .rng
            .weighted_choice(&self.weights)
            .expect("feed weights lie in [0, 1]");
        match choice {
            Choice::AllZero => {
                self.counters.refrained += 1;
                Action::Refrained
            }
            Choice::Index(i) => {
                let id = self.feeds[agent].get(i).expect("index within feed");
                self.posts[id.0 as usize].popularity += 1;
                self.counters.reshares += 1;
                self.push_to_followers(agent, id);
                Action::Reshared(id)
            }
        }
    }

    /// Put `id` on top of every follower's feed. The sharer's own feed is untouched.
    pub fn push_to_followers(&mut self, sharer: usize, id: PostId) {
        for &follower in self.network.followers(sharer) {
            self.feeds[follower as usize].push(id);
        }
    }

    fn create_post(&mut self, author: usize) -> PostId {
        let quality = self.rng.sample_unit_linear();
        let engagement = self.rng.sample_unit_linear();
        let id = PostId(u32::try_from(self.posts.len()).expect("post ids fit in u32"));
        self.posts.push(Post {
            id,
            quality,
            engagement,
            author: author as u32,
            created_step: self.step,
            popularity: 1,
        });
        self.counters.posts += 1;
        self.push_to_followers(author, id);
        id
    }

    fn draw(&mut self, p: f64) -> bool {
        self.rng.bernoulli(p).expect("probabilities validated on construction")
    }

    /// Register a post with given scores without delivering it anywhere.
    #[doc(hidden)]
    pub fn inject_post(&mut self, author: usize, quality: f64, engagement: f64) -> PostId {
        let id = PostId(self.posts.len() as u32);
        self.posts.push(Post {
            id,
            quality,
            engagement,
            author: author as u32,
            created_step: self.step,
            popularity: 1,
        });
        self.counters.posts += 1;
        id
    }

    #[doc(hidden)]
    pub fn feed_mut(&mut self, agent: usize) -> &mut Feed {
        &mut self.feeds[agent]
    }

    #[doc(hidden)]
    pub fn set_exposed(&mut self, agent: usize, exposed: bool) {
        self.agents[agent].friction_exposed = exposed;
    }
}

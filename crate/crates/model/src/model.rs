use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use resprover_core::{Clause, CnfFormula};
use resprover_nn::params::xavier;
use resprover_nn::{checkpoint, Activation, Mat, Mlp, ParamId, ParamStore, Tape};

use crate::config::{ModelConfig, Variant};
use crate::embedder::{Embedder, EmbeddingState, InitOverride, MessageEvent};
use crate::error::Result;
use crate::graph::FormulaGraph;
use crate::pool::ClausePool;

#[derive(Clone, Debug)]
pub enum SelectorParams {
    Full { wq: ParamId, wk: ParamId },
    Cascaded { w1: ParamId, w2: ParamId, u: ParamId },
    Anchored { w1: ParamId, w2: ParamId, u: ParamId, wq: ParamId, wk: ParamId },
}

/// All trainable heads over one parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub embedder: Embedder,
    pub selector: SelectorParams,
    /// ψ: literal embedding → assignment logit.
    pub decoder: Mlp,
    /// Per-literal satisfiability vote.
    pub classifier: Mlp,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embedder = Embedder::register(&mut store, &mut rng, d)?;
        let selector = match cfg.variant {
            Variant::Full => SelectorParams::Full {
                wq: store.register("select.wq", xavier(d, d, &mut rng))?,
                wk: store.register("select.wk", xavier(d, d, &mut rng))?,
            },
            Variant::Cascaded => SelectorParams::Cascaded {
                w1: store.register("select.w1", xavier(2 * d, d, &mut rng))?,
                w2: store.register("select.w2", xavier(d, d, &mut rng))?,
                u: store.register("select.u", xavier(d, 1, &mut rng))?,
            },
            Variant::Anchored => SelectorParams::Anchored {
                w1: store.register("select.w1", xavier(d, d, &mut rng))?,
                w2: store.register("select.w2", xavier(d, d, &mut rng))?,
                u: store.register("select.u", xavier(d, 1, &mut rng))?,
                wq: store.register("select.wq", xavier(d, d, &mut rng))?,
                wk: store.register("select.wk", xavier(d, d, &mut rng))?,
            },
        };
        let decoder = Mlp::register(&mut store, &mut rng, "decode", &[d, d, 1], false, Activation::Relu, Activation::Identity)?;
        let classifier =
            Mlp::register(&mut store, &mut rng, "classify", &[d, d, d, 1], true, Activation::Relu, Activation::Identity)?;
        Ok(Model {
            cfg,
            store,
            embedder,
            selector,
            decoder,
            classifier,
        })
    }

    /// Writes the parameters to `path` and the configuration to `path.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.store, path)?;
        fs::write(sidecar(path), serde_json::to_string_pretty(&self.cfg)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
        let mut model = Model::new(cfg, 0)?;
        checkpoint::load_into(&mut model.store, path)?;
        Ok(model)
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        checkpoint::encode(&self.store)
    }

    /// Parameter ids whose names start with `scope`.
    pub fn scope_ids(&self, scope: &str) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, n, _)| n.starts_with(scope))
            .map(|(id, _, _)| id)
            .collect()
    }

    pub fn session(&self, f: &CnfFormula) -> Session<'_> {
        Session::new(self, f, SessionOptions::default())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SessionOptions {
    /// Overrides the configured number of initial rounds.
    pub rounds: Option<usize>,
    pub init: Option<InitOverride>,
    pub record_events: bool,
}

/// The evolving state of one formula: clause pool, graph and embeddings on a tape.
pub struct Session<'m> {
    pub model: &'m Model,
    pub tape: Tape,
    pub graph: FormulaGraph,
    pub pool: ClausePool,
    pub state: EmbeddingState,
    pub events: Option<Vec<MessageEvent>>,
    num_input: usize,
}

impl<'m> Session<'m> {
    pub fn new(model: &'m Model, f: &CnfFormula, opts: SessionOptions) -> Self {
        let graph = FormulaGraph::new(f);
        let pool = ClausePool::new(f.num_vars(), f.clauses().cloned());
        let rounds = opts.rounds.unwrap_or(model.cfg.rounds);
        let mut tape = Tape::new();
        let state = model
            .embedder
            .embed(&mut tape, &model.store, &graph, rounds, opts.init.as_ref());
        let events = opts
            .record_events
            .then(|| vec![MessageEvent::Round { clauses: graph.num_clauses() }; rounds]);
        Session {
            model,
            tape,
            graph,
            pool,
            state,
            events,
            num_input: f.num_input(),
        }
    }

    pub fn num_input(&self) -> usize {
        self.num_input
    }

    pub fn num_vars(&self) -> usize {
        self.graph.num_vars()
    }

    /// Appends `c` to the pool and graph and embeds it per the configured mode.
    /// Returns the new clause's 0-based index.
    pub fn add_clause(&mut self, c: Clause) -> usize {
        let k = self.pool.push(c.clone());
        let gk = self.graph.push_clause(&c);
        debug_assert_eq!(k, gk);
        let m = self.model;
        self.state = m
            .embedder
            .integrate(&mut self.tape, &m.store, &self.graph, &self.state, m.cfg.mode);
        if let Some(ev) = &mut self.events {
            ev.push(match m.cfg.mode {
                crate::config::EmbedMode::Static => MessageEvent::Local { clause: k },
                crate::config::EmbedMode::Dynamic => MessageEvent::Round { clauses: k + 1 },
            });
        }
        k
    }

    /// Moves the current state onto a fresh tape, dropping history.
    pub fn detach(&mut self) {
        let mut tape = Tape::new();
        let s = self.state;
        self.state = EmbeddingState {
            lit_h: tape.input(self.tape.value(s.lit_h).clone()),
            lit_c: tape.input(self.tape.value(s.lit_c).clone()),
            cls_h: tape.input(self.tape.value(s.cls_h).clone()),
            cls_c: tape.input(self.tape.value(s.cls_c).clone()),
            rounds: s.rounds,
        };
        self.tape = tape;
    }

    /// E^L.
    pub fn literal_embeddings(&self) -> &Mat {
        self.tape.value(self.state.lit_h)
    }

    /// E^C.
    pub fn clause_embeddings(&self) -> &Mat {
        self.tape.value(self.state.cls_h)
    }
}

//! Model configuration and the trainable parameter layout.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocab;
use crate::error::{CheckpointError, ModelError};
use crate::tensor::{
    init_uniform, read_checkpoint, write_checkpoint, GruCell, GruCellParams, ParamId, ParamStore, Tensor,
};

/// Which representations feed link prediction and relation classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Structured representations with speaker highlighting.
    Full,
    /// Non-structured baseline: local and sequence representations only.
    Ns,
    /// Structured encoder run over a uniformly random structure.
    Random,
    /// Structured representations with a single recurrent cell for all
    /// speakers.
    NoShm,
}

impl Mode {
    pub fn uses_structure(self) -> bool {
        self != Mode::Ns
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Ns => "ns",
            Mode::Random => "random",
            Mode::NoShm => "no-shm",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "ns" => Ok(Mode::Ns),
            "random" => Ok(Mode::Random),
            "no-shm" => Ok(Mode::NoShm),
            _ => Err(format!("unknown mode '{}' (expected full, ns, random or no-shm)", s)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Word embedding size.
    pub word_dim: usize,
    /// Size of every discourse representation; each direction of the
    /// local bi-GRU gets half.
    pub repr_dim: usize,
    /// Relation embedding size.
    pub rel_dim: usize,
    /// Hidden size of the link and relation heads.
    pub head_dim: usize,
    pub mode: Mode,
    /// Link and relation heads read the same input vector.
    pub shared: bool,
    pub init_bound: f64,
    pub embedding_init_bound: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 100,
            repr_dim: 256,
            rel_dim: 100,
            head_dim: 512,
            mode: Mode::Full,
            shared: false,
            init_bound: 0.08,
            embedding_init_bound: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.word_dim == 0 || self.rel_dim == 0 || self.head_dim == 0 {
            return err("dimensions must be positive".into());
        }
        if self.repr_dim < 2 || !self.repr_dim.is_multiple_of(2) {
            return err(format!("repr_dim must be even and at least 2, got {}", self.repr_dim));
        }
        if !(self.init_bound >= 0.0 && self.embedding_init_bound >= 0.0) {
            return err("initialization bounds must be non-negative".into());
        }
        Ok(())
    }

    /// Width of the joint input vector: four discourse representations.
    pub fn input_dim(&self) -> usize {
        4 * self.repr_dim
    }
}

/// Embeddings and recurrent cells producing one set of representations.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStack {
    pub word_emb: ParamId,
    /// Local representation of the token-less dummy root.
    pub root_local: ParamId,
    pub fwd: GruCell,
    pub bwd: GruCell,
    pub global: GruCell,
    pub rel_emb: ParamId,
    pub struct_hl: GruCell,
    pub struct_gen: GruCell,
}

/// Two-layer scorer: `U tanh(W H + b) + b'`.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub w: ParamId,
    pub b: ParamId,
    pub u: ParamId,
    pub b_out: ParamId,
    pub outputs: usize,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    pub link_stack: EncoderStack,
    /// Same as `link_stack` when the input vector is shared.
    pub rel_stack: EncoderStack,
    pub link_head: Head,
    pub rel_head: Head,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ModelConfig,
    vocab: Vocab,
}

impl Model {
    /// Builds a freshly initialized model.
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.num_relations() == 0 {
            return Err(ModelError::Config("vocabulary has no relation types".into()));
        }
        if vocab.num_words() <= Vocab::UNK_ID {
            return Err(ModelError::Config(
                "vocabulary lacks the padding and unknown tokens".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();

        let link_stack = Self::build_stack(
            &mut params,
            &config,
            &vocab,
            if config.shared { "enc" } else { "link" },
            &mut rng,
        );
        let rel_stack = if config.shared {
            link_stack.clone()
        } else {
            Self::build_stack(&mut params, &config, &vocab, "rel", &mut rng)
        };
        let link_head = Self::build_head(&mut params, &config, "link_head", 1, &mut rng);
        let rel_head = Self::build_head(&mut params, &config, "rel_head", vocab.num_relations(), &mut rng);

        let model = Model {
            config,
            vocab,
            params,
            link_stack,
            rel_stack,
            link_head,
            rel_head,
        };
        model.validate()?;
        Ok(model)
    }

    fn build_stack(
        params: &mut ParamStore,
        cfg: &ModelConfig,
        vocab: &Vocab,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> EncoderStack {
        let r = cfg.repr_dim;
        let name = |s: &str| format!("{}.{}", prefix, s);
        let mut word = init_uniform(&[vocab.num_words(), cfg.word_dim], cfg.embedding_init_bound, rng);
        // PAD never appears in input, keep its row at zero
        word.data_mut()[..cfg.word_dim].iter_mut().for_each(|v| *v = 0.0);
        let word_emb = params.add(name("word_emb"), word);
        let root_local = params.add(name("root_local"), init_uniform(&[1, r], cfg.init_bound, rng));
        let half = GruCellParams {
            input: cfg.word_dim,
            hidden: r / 2,
        };
        let fwd = GruCell::new(params, &name("local_fwd"), half, cfg.init_bound, rng);
        let bwd = GruCell::new(params, &name("local_bwd"), half, cfg.init_bound, rng);
        let global = GruCell::new(
            params,
            &name("global"),
            GruCellParams { input: r, hidden: r },
            cfg.init_bound,
            rng,
        );
        let rel_emb = params.add(
            name("rel_emb"),
            init_uniform(&[vocab.num_relations(), cfg.rel_dim], cfg.init_bound, rng),
        );
        let sdims = GruCellParams {
            input: r + cfg.rel_dim,
            hidden: r,
        };
        let struct_hl = GruCell::new(params, &name("struct_hl"), sdims, cfg.init_bound, rng);
        let struct_gen = GruCell::new(params, &name("struct_gen"), sdims, cfg.init_bound, rng);
        EncoderStack {
            word_emb,
            root_local,
            fwd,
            bwd,
            global,
            rel_emb,
            struct_hl,
            struct_gen,
        }
    }

    fn build_head(
        params: &mut ParamStore,
        cfg: &ModelConfig,
        prefix: &str,
        outputs: usize,
        rng: &mut ChaCha8Rng,
    ) -> Head {
        let (d_in, d_hid) = (cfg.input_dim(), cfg.head_dim);
        Head {
            w: params.add(
                format!("{}.w", prefix),
                init_uniform(&[d_in, d_hid], cfg.init_bound, rng),
            ),
            b: params.add(format!("{}.b", prefix), Tensor::zeros(&[1, d_hid])),
            u: params.add(
                format!("{}.u", prefix),
                init_uniform(&[d_hid, outputs], cfg.init_bound, rng),
            ),
            b_out: params.add(format!("{}.b_out", prefix), Tensor::zeros(&[1, outputs])),
            outputs,
        }
    }

    /// Checks every parameter shape against the configuration.
    pub fn validate(&self) -> Result<(), ModelError> {
        let cfg = &self.config;
        let expect = |id: ParamId, shape: [usize; 2]| -> Result<(), ModelError> {
            let got = self.params.get(id).shape();
            if got != shape {
                return Err(ModelError::Config(format!(
                    "parameter '{}' has shape {:?}, expected {:?}",
                    self.params.name(id),
                    got,
                    shape
                )));
            }
            Ok(())
        };
        for s in self.stacks() {
            expect(s.word_emb, [self.vocab.num_words(), cfg.word_dim])?;
            expect(s.root_local, [1, cfg.repr_dim])?;
            expect(s.rel_emb, [self.vocab.num_relations(), cfg.rel_dim])?;
            for cell in [&s.fwd, &s.bwd, &s.global, &s.struct_hl, &s.struct_gen] {
                cell.validate(&self.params)?;
            }
            if s.fwd.dims.hidden + s.bwd.dims.hidden != cfg.repr_dim
                || s.global.dims.hidden != cfg.repr_dim
                || s.struct_hl.dims.hidden != cfg.repr_dim
            {
                return Err(ModelError::Config("representation sizes disagree".into()));
            }
        }
        for h in [&self.link_head, &self.rel_head] {
            expect(h.w, [cfg.input_dim(), cfg.head_dim])?;
            expect(h.b, [1, cfg.head_dim])?;
            expect(h.u, [cfg.head_dim, h.outputs])?;
            expect(h.b_out, [1, h.outputs])?;
        }
        Ok(())
    }

    /// Distinct encoder stacks: one when shared, two otherwise.
    pub fn stacks(&self) -> Vec<&EncoderStack> {
        if self.config.shared {
            vec![&self.link_stack]
        } else {
            vec![&self.link_stack, &self.rel_stack]
        }
    }

    /// Copies pretrained vectors into the word embeddings of every stack.
    /// Returns the number of vocabulary words found in the file.
    pub fn load_embeddings<R: BufRead>(&mut self, reader: R) -> Result<usize, ModelError> {
        let dim = self.config.word_dim;
        let stacks: Vec<ParamId> = self.stacks().iter().map(|s| s.word_emb).collect();
        let mut found = 0;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(CheckpointError::from)?;
            let mut parts = line.split_whitespace();
            let word = match parts.next() {
                Some(w) => w,
                None => continue,
            };
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| ModelError::Config(format!("embeddings line {}: {}", lineno + 1, e)))?;
            if values.len() != dim {
                return Err(ModelError::Config(format!(
                    "embeddings line {}: expected {} values, got {}",
                    lineno + 1,
                    dim,
                    values.len()
                )));
            }
            let id = self.vocab.word_id(word);
            if id == Vocab::UNK_ID && word != crate::corpus::UNK {
                continue;
            }
            found += 1;
            for &p in &stacks {
                self.params.get_mut(p).data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
            }
        }
        Ok(found)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let meta = serde_json::to_value(CheckpointMeta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        })
        .map_err(|e| CheckpointError::Format(e.to_string()))?;
        write_checkpoint(w, &meta, &self.params)?;
        Ok(())
    }

    /// Restores a model; every stored tensor must match the rebuilt layout.
    pub fn load<R: Read>(r: R) -> Result<Self, ModelError> {
        let (meta, tensors) = read_checkpoint(r)?;
        let CheckpointMeta { config, mut vocab } =
            serde_json::from_value(meta).map_err(|e| CheckpointError::Format(e.to_string()))?;
        vocab.reindex();
        let mut model = Model::new(config, vocab, 0)?;
        let mut seen = vec![false; model.params.len()];
        for (name, t) in tensors {
            let id = model.params.id(&name).ok_or_else(|| CheckpointError::Param {
                name: name.clone(),
                msg: "not part of the model".into(),
            })?;
            model.params.assign(&name, t).map_err(|e| CheckpointError::Param {
                name: name.clone(),
                msg: e.to_string(),
            })?;
            seen[id.0] = true;
        }
        if let Some(missing) = model.params.ids().find(|id| !seen[id.0]) {
            return Err(CheckpointError::Param {
                name: model.params.name(missing).to_owned(),
                msg: "missing from checkpoint".into(),
            }
            .into());
        }
        Ok(model)
    }
}

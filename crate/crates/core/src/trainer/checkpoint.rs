use std::collections::BTreeMap;
use std::path::Path;

use super::TrainConfig;
use crate::autodiff::{Adam, Archive, Parameters, Tensor};
use crate::error::{Error, Result};
use crate::network::{Discriminator, Generator};

const GEN: &str = "gen/";
const DIS: &str = "dis/";

/// Networks, optimizer state and configuration after some number of epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub epoch: usize,
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub adam_g: Adam,
    pub adam_d: Option<Adam>,
}

fn store_adam(a: &mut Archive, key: &str, adam: &Adam) {
    a.meta.insert(format!("{key}.step"), adam.steps().to_string());
    let (m, v) = adam.moments();
    for (name, t) in m {
        a.tensors.insert(format!("{key}/m/{name}"), t.clone());
    }
    for (name, t) in v {
        a.tensors.insert(format!("{key}/v/{name}"), t.clone());
    }
}

fn load_adam(a: &Archive, key: &str, lr: f64) -> Result<Adam> {
    let step = a.meta_parse(&format!("{key}.step"))?;
    let collect = |which: &str| -> BTreeMap<String, Tensor> {
        let prefix = format!("{key}/{which}/");
        a.tensors
            .iter()
            .filter_map(|(n, t)| n.strip_prefix(&prefix).map(|s| (s.to_string(), t.clone())))
            .collect()
    };
    Ok(Adam::restore(lr, step, collect("m"), collect("v")))
}

impl Checkpoint {
    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new();
        let g = self.generator.config();
        let config = serde_json::to_string(&self.config).expect("config serializes");
        for (k, v) in [
            ("config", config),
            ("epoch", self.epoch.to_string()),
            ("ratio", g.ratio.to_string()),
            ("k", g.k.to_string()),
            ("channels", g.channels.to_string()),
            ("progressive", g.progressive.to_string()),
            ("stages", self.generator.num_stages().to_string()),
            ("discriminator", self.discriminator.is_some().to_string()),
        ] {
            a.meta.insert(k.to_string(), v);
        }
        a.store(GEN, &self.generator);
        store_adam(&mut a, "adam_g", &self.adam_g);
        if let Some(d) = &self.discriminator {
            a.store(DIS, d);
            a.meta.insert("attention".into(), d.use_attention.to_string());
        }
        if let Some(adam) = &self.adam_d {
            store_adam(&mut a, "adam_d", adam);
        }
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(a.meta("config")?)
            .map_err(|e| Error::Checkpoint(format!("bad config record: {e}")))?;
        let gcfg = config.generator_config();
        let expect = |key: &str, value: String| -> Result<()> {
            if a.meta(key)? != value {
                return Err(Error::Checkpoint(format!(
                    "architecture field `{key}` is {} but the config implies {value}",
                    a.meta(key)?
                )));
            }
            Ok(())
        };
        expect("ratio", gcfg.ratio.to_string())?;
        expect("k", gcfg.k.to_string())?;
        expect("channels", gcfg.channels.to_string())?;
        expect("progressive", gcfg.progressive.to_string())?;

        let mut generator = Generator::zeros(gcfg)?;
        expect("stages", generator.num_stages().to_string())?;
        a.restore_into(GEN, &mut generator)?;
        let adam_g = load_adam(a, "adam_g", config.lr_g)?;

        let (discriminator, adam_d) = if a.meta_parse::<bool>("discriminator")? {
            let attention = a.meta_parse::<bool>("attention")?;
            let mut d = Discriminator::zeros(config.channels, attention);
            a.restore_into(DIS, &mut d)?;
            (Some(d), Some(load_adam(a, "adam_d", config.lr_d)?))
        } else {
            (None, None)
        };

        Ok(Self {
            epoch: a.meta_parse("epoch")?,
            config,
            generator,
            discriminator,
            adam_g,
            adam_d,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_archive().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_archive(&Archive::from_bytes(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }

    pub fn num_generator_parameters(&self) -> usize {
        self.generator.num_parameters()
    }
}

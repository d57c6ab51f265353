//! JSON model documents.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoostedModel, RegressionTree, TrainConfig, TrainTrace, TreeNode};
use crate::error::{Error, Result};
use crate::ingest::Schema;
use crate::logic::{parse_literal, render_literal, Conjunction, RuleStyle};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    target: String,
    psi0: f64,
    schema_hash: String,
    schema: Schema,
    config: TrainConfig,
    trace: TrainTrace,
    trees: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeDoc {
    Leaf {
        weight: f64,
    },
    Interior {
        test: Vec<String>,
        yes: Box<NodeDoc>,
        no: Box<NodeDoc>,
    },
}

fn node_to_doc(node: &TreeNode, schema: &Schema) -> Result<NodeDoc> {
    Ok(match node {
        TreeNode::Leaf { weight } => NodeDoc::Leaf { weight: *weight },
        TreeNode::Interior { test, yes, no } => NodeDoc::Interior {
            test: test
                .literals()
                .iter()
                .map(|l| render_literal(l, schema, RuleStyle::Ascii))
                .collect::<Result<_>>()?,
            yes: Box::new(node_to_doc(yes, schema)?),
            no: Box::new(node_to_doc(no, schema)?),
        },
    })
}

fn doc_to_node(doc: NodeDoc, schema: &Schema) -> Result<TreeNode> {
    Ok(match doc {
        NodeDoc::Leaf { weight } => {
            if !weight.is_finite() {
                return Err(Error::Model(format!("non-finite leaf weight {weight}")));
            }
            TreeNode::Leaf { weight }
        }
        NodeDoc::Interior { test, yes, no } => {
            let lits = test
                .iter()
                .map(|t| parse_literal(t, schema))
                .collect::<Result<Vec<_>>>()?;
            TreeNode::Interior {
                test: Conjunction::new(lits).map_err(|e| Error::Model(e.to_string()))?,
                yes: Box::new(doc_to_node(*yes, schema)?),
                no: Box::new(doc_to_node(*no, schema)?),
            }
        }
    })
}

impl BoostedModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format_version: FORMAT_VERSION,
            target: self.target.clone(),
            psi0: self.psi0,
            schema_hash: self.schema.hash(),
            schema: self.schema.clone(),
            config: self.config.clone(),
            trace: self.trace.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| node_to_doc(&t.root, &self.schema))
                .collect::<Result<_>>()?,
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Model(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let version: Version = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if version.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: version.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        doc.schema.validate()?;
        let actual = doc.schema.hash();
        if actual != doc.schema_hash {
            return Err(Error::SchemaMismatch {
                model: doc.schema_hash,
                supplied: actual,
            });
        }
        if doc.schema.action(&doc.target).is_none() {
            return Err(Error::UnknownPredicate(doc.target));
        }
        let trees = doc
            .trees
            .into_iter()
            .map(|n| doc_to_node(n, &doc.schema).map(|root| RegressionTree { root }))
            .collect::<Result<_>>()?;
        Ok(BoostedModel {
            target: doc.target,
            psi0: doc.psi0,
            trees,
            config: doc.config,
            schema: doc.schema,
            trace: doc.trace,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Errors unless `schema` is the one the model was trained with.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        let (model, supplied) = (self.schema.hash(), schema.hash());
        if model == supplied {
            Ok(())
        } else {
            Err(Error::SchemaMismatch { model, supplied })
        }
    }
}

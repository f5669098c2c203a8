//! Noise-free labeller for audits in the simulated world.

use crate::error::Result;
use crate::generation::{CompletionRequest, Generator, PartKind, RawCompletion};
use crate::simulation::fingerprint;
use crate::simulation::world::SimWorld;

/// Answers label queries with the true label of the queried sample's
/// cluster, read from its fingerprint. Replies `unknown` when the query
/// carries no usable fingerprint.
#[derive(Debug, Clone)]
pub struct SimulatedJudge {
    world: SimWorld,
}

impl SimulatedJudge {
    pub fn new(world: SimWorld) -> Self {
        SimulatedJudge { world }
    }
}

impl Generator for SimulatedJudge {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawCompletion> {
        let query = request.prompt.part(PartKind::GenerateInstruction).unwrap_or_default();
        let label = fingerprint::decode_all(query)
            .last()
            .and_then(|r| self.world.clusters.get(r.cluster))
            .map_or("unknown", |c| c.label.as_str());
        Ok(RawCompletion {
            prompt_id: request.prompt_id,
            text: format!("Label: {label}"),
            finish_reason: "stop".into(),
        })
    }
}

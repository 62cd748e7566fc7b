//! Confidence-scored triple store with rule-based completion.
//!
//! Chained inferences multiply premise confidences and competing derivations
//! of the same triple keep the maximum. Rules are evaluated stratum by
//! stratum in relation dependency order, so every relation is complete
//! before anything that depends on it is derived. Transitive relations are
//! closed left-linearly (a known chain is extended by one asserted edge at a
//! time), which makes every derived confidence a left-to-right product along
//! one path of asserted edges.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Confidence at or above which an intent is considered known.
pub const INTENT_THRESHOLD: f64 = 0.5;

pub const REQUESTS: &str = "requests";
pub const GUIDANCE: &str = "guidance";
pub const PREFERS: &str = "prefers";
pub const AUTONOMY: &str = "autonomy";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("confidence {0} outside (0, 1]")]
    Confidence(f64),
    #[error("empty identifier in triple")]
    EmptyId,
    #[error("rule {index}: {reason}")]
    Rule { index: usize, reason: String },
    #[error("rule set is cyclic through relation `{0}`")]
    Cyclic(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub confidence: f64,
}

impl KnowledgeTriple {
    pub fn new(head: &str, relation: &str, tail: &str, confidence: f64) -> Self {
        Self {
            head: head.to_owned(),
            relation: relation.to_owned(),
            tail: tail.to_owned(),
            confidence,
        }
    }

    fn validate(&self) -> Result<(), KnowledgeError> {
        if !(self.confidence > 0.0 && self.confidence <= 1.0) {
            return Err(KnowledgeError::Confidence(self.confidence));
        }
        if self.head.is_empty() || self.relation.is_empty() || self.tail.is_empty() {
            return Err(KnowledgeError::EmptyId);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// `r(a,b) ∧ r(b,c) → r(a,c)`; the single premise equals the conclusion.
    Transitive,
    /// `p1(a,b) [∧ p2(b,c)] → conclusion(a,c)`.
    Composed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionRule {
    pub premises: Vec<String>,
    pub conclusion: String,
    pub kind: RuleKind,
}

impl CompletionRule {
    pub fn transitive(relation: &str) -> Self {
        Self {
            premises: vec![relation.to_owned()],
            conclusion: relation.to_owned(),
            kind: RuleKind::Transitive,
        }
    }

    pub fn composed(premises: &[&str], conclusion: &str) -> Self {
        Self {
            premises: premises.iter().map(|p| (*p).to_owned()).collect(),
            conclusion: conclusion.to_owned(),
            kind: RuleKind::Composed,
        }
    }
}

/// A validated, dependency-ordered rule set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    rules: Vec<CompletionRule>,
    /// Conclusion relations in evaluation order.
    strata: Vec<String>,
}

impl RuleSet {
    pub fn new(rules: Vec<CompletionRule>) -> Result<Self, KnowledgeError> {
        for (index, rule) in rules.iter().enumerate() {
            let bad = |reason: &str| KnowledgeError::Rule {
                index,
                reason: reason.to_owned(),
            };
            if rule.conclusion.is_empty() || rule.premises.iter().any(String::is_empty) {
                return Err(bad("empty relation id"));
            }
            match rule.kind {
                RuleKind::Transitive => {
                    if rule.premises.len() != 1 || rule.premises[0] != rule.conclusion {
                        return Err(bad("transitive rule needs exactly its own relation as premise"));
                    }
                }
                RuleKind::Composed => {
                    if !(1..=2).contains(&rule.premises.len()) {
                        return Err(bad("composed rule needs one or two premises"));
                    }
                    if rule.premises.contains(&rule.conclusion) {
                        return Err(bad("composed rule concludes its own premise relation"));
                    }
                }
            }
        }

        // Dependency edges conclusion -> premise (transitive self-loops excluded).
        let mut deps: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for rule in &rules {
            let entry = deps.entry(rule.conclusion.as_str()).or_default();
            if rule.kind == RuleKind::Composed {
                entry.extend(rule.premises.iter().map(String::as_str));
            }
        }
        let mut strata = Vec::new();
        let mut state: BTreeMap<&str, u8> = BTreeMap::new(); // 1 = visiting, 2 = done
        fn visit<'a>(
            rel: &'a str,
            deps: &BTreeMap<&'a str, BTreeSet<&'a str>>,
            state: &mut BTreeMap<&'a str, u8>,
            out: &mut Vec<String>,
        ) -> Result<(), KnowledgeError> {
            match state.get(rel) {
                Some(2) => return Ok(()),
                Some(1) => return Err(KnowledgeError::Cyclic(rel.to_owned())),
                _ => {}
            }
            state.insert(rel, 1);
            if let Some(premises) = deps.get(rel) {
                for p in premises {
                    visit(p, deps, state, out)?;
                }
                out.push(rel.to_owned());
            }
            state.insert(rel, 2);
            Ok(())
        }
        for rel in deps.keys() {
            visit(rel, &deps, &mut state, &mut strata)?;
        }
        Ok(Self { rules, strata })
    }

    pub fn rules(&self) -> &[CompletionRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

type Key = (String, String, String);

/// Asserted triples keyed by `(head, relation, tail)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    asserted: BTreeMap<Key, f64>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.asserted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asserted.is_empty()
    }

    /// Inserts a triple; re-asserting a key keeps the larger confidence.
    pub fn assert_triple(&mut self, triple: KnowledgeTriple) -> Result<(), KnowledgeError> {
        triple.validate()?;
        let slot = self
            .asserted
            .entry((triple.head, triple.relation, triple.tail))
            .or_insert(triple.confidence);
        if triple.confidence > *slot {
            *slot = triple.confidence;
        }
        Ok(())
    }

    pub fn confidence(&self, head: &str, relation: &str, tail: &str) -> Option<f64> {
        self.asserted
            .get(&(head.to_owned(), relation.to_owned(), tail.to_owned()))
            .copied()
    }

    pub fn triples(&self) -> impl Iterator<Item = KnowledgeTriple> + '_ {
        self.asserted.iter().map(|((h, r, t), c)| KnowledgeTriple {
            head: h.clone(),
            relation: r.clone(),
            tail: t.clone(),
            confidence: *c,
        })
    }

    /// Triples derived by `rules` that are either absent from the store or
    /// carry a higher confidence than the asserted copy. Sorted by key.
    pub fn complete(&self, rules: &RuleSet) -> Vec<KnowledgeTriple> {
        self.closure(rules)
            .into_iter()
            .filter(|(key, c)| self.asserted.get(key).is_none_or(|a| c > a))
            .map(|((h, r, t), c)| KnowledgeTriple {
                head: h,
                relation: r,
                tail: t,
                confidence: c,
            })
            .collect()
    }

    /// Asserted plus inferred triples, max-merged.
    pub fn closure(&self, rules: &RuleSet) -> BTreeMap<Key, f64> {
        // relation -> (head, tail) -> confidence
        let mut by_rel: BTreeMap<String, BTreeMap<(String, String), f64>> = BTreeMap::new();
        for ((h, r, t), c) in &self.asserted {
            by_rel
                .entry(r.clone())
                .or_default()
                .insert((h.clone(), t.clone()), *c);
        }

        for relation in &rules.strata {
            let mut base = by_rel.get(relation).cloned().unwrap_or_default();
            let mut transitive = false;
            for rule in rules.rules.iter().filter(|r| &r.conclusion == relation) {
                match rule.kind {
                    RuleKind::Transitive => transitive = true,
                    RuleKind::Composed => {
                        let empty = BTreeMap::new();
                        let first = by_rel.get(&rule.premises[0]).unwrap_or(&empty);
                        if rule.premises.len() == 1 {
                            for (pair, c) in first {
                                merge_max(&mut base, pair.clone(), *c);
                            }
                        } else {
                            let second = by_rel.get(&rule.premises[1]).unwrap_or(&empty);
                            for ((a, b), c1) in first {
                                for ((_, c), c2) in second.range(
                                    (b.clone(), String::new())..,
                                ).take_while(|((h, _), _)| h == b) {
                                    merge_max(&mut base, (a.clone(), c.clone()), c1 * c2);
                                }
                            }
                        }
                    }
                }
            }
            let closed = if transitive { transitive_closure(&base) } else { base };
            by_rel.insert(relation.clone(), closed);
        }

        by_rel
            .into_iter()
            .flat_map(|(r, pairs)| {
                pairs
                    .into_iter()
                    .map(move |((h, t), c)| ((h, r.clone(), t), c))
            })
            .collect()
    }
}

fn merge_max(map: &mut BTreeMap<(String, String), f64>, key: (String, String), c: f64) {
    let slot = map.entry(key).or_insert(c);
    if c > *slot {
        *slot = c;
    }
}

/// Max-product closure: `closed(a,c) = max(base(a,c), max_b closed(a,b)·base(b,c))`,
/// relaxed until no confidence increases.
fn transitive_closure(
    base: &BTreeMap<(String, String), f64>,
) -> BTreeMap<(String, String), f64> {
    let mut out_edges: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for ((a, b), c) in base {
        out_edges.entry(a.as_str()).or_default().push((b.as_str(), *c));
    }
    let mut closed = base.clone();
    let mut frontier: BTreeSet<(String, String)> = base.keys().cloned().collect();
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for (a, b) in &frontier {
            let via = closed[&(a.clone(), b.clone())];
            let Some(edges) = out_edges.get(b.as_str()) else {
                continue;
            };
            for (c, edge) in edges {
                let candidate = via * edge;
                let key = (a.clone(), (*c).to_owned());
                match closed.get(&key) {
                    Some(existing) if *existing >= candidate => {}
                    _ => {
                        closed.insert(key.clone(), candidate);
                        next.insert(key);
                    }
                }
            }
        }
        frontier = next;
    }
    closed
}

/// Pattern position: `None` matches anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pattern {
    pub head: Option<String>,
    pub relation: Option<String>,
    pub tail: Option<String>,
}

impl Pattern {
    pub fn new(head: Option<&str>, relation: Option<&str>, tail: Option<&str>) -> Self {
        Self {
            head: head.map(str::to_owned),
            relation: relation.map(str::to_owned),
            tail: tail.map(str::to_owned),
        }
    }

    fn matches(&self, (h, r, t): &Key) -> bool {
        self.head.as_ref().is_none_or(|x| x == h)
            && self.relation.as_ref().is_none_or(|x| x == r)
            && self.tail.as_ref().is_none_or(|x| x == t)
    }
}

/// Matches over asserted and inferred triples, ordered by (head, relation, tail).
pub fn query(graph: &KnowledgeGraph, rules: &RuleSet, pattern: &Pattern) -> Vec<KnowledgeTriple> {
    graph
        .closure(rules)
        .into_iter()
        .filter(|(key, _)| pattern.matches(key))
        .map(|((h, r, t), c)| KnowledgeTriple {
            head: h,
            relation: r,
            tail: t,
            confidence: c,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    GuidanceRequested,
    AutonomyPreferred,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentEstimate {
    pub intent: Intent,
    pub confidence: f64,
    pub supporting: Vec<KnowledgeTriple>,
}

impl IntentEstimate {
    pub fn unknown() -> Self {
        Self {
            intent: Intent::Unknown,
            confidence: 0.0,
            supporting: vec![],
        }
    }
}

/// Operator intent from `(worker, requests, guidance)` and
/// `(worker, prefers, autonomy)`. Ties go to guidance.
pub fn infer_intent(graph: &KnowledgeGraph, rules: &RuleSet, worker_id: &str) -> IntentEstimate {
    let closure = graph.closure(rules);
    let lookup = |rel: &str, tail: &str| {
        let key = (worker_id.to_owned(), rel.to_owned(), tail.to_owned());
        closure.get(&key).map(|c| KnowledgeTriple {
            head: key.0,
            relation: key.1,
            tail: key.2,
            confidence: *c,
        })
    };
    let guidance = lookup(REQUESTS, GUIDANCE);
    let autonomy = lookup(PREFERS, AUTONOMY);
    let best = match (guidance, autonomy) {
        (Some(g), Some(a)) if a.confidence > g.confidence => Some((Intent::AutonomyPreferred, a)),
        (Some(g), _) => Some((Intent::GuidanceRequested, g)),
        (None, Some(a)) => Some((Intent::AutonomyPreferred, a)),
        (None, None) => None,
    };
    match best {
        Some((intent, triple)) if triple.confidence >= INTENT_THRESHOLD => IntentEstimate {
            intent,
            confidence: triple.confidence,
            supporting: vec![triple],
        },
        Some((_, triple)) => IntentEstimate {
            intent: Intent::Unknown,
            confidence: triple.confidence,
            supporting: vec![],
        },
        None => IntentEstimate::unknown(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part_of_chain() -> (KnowledgeGraph, RuleSet) {
        let mut g = KnowledgeGraph::new();
        g.assert_triple(KnowledgeTriple::new("A", "partOf", "B", 0.9)).unwrap();
        g.assert_triple(KnowledgeTriple::new("B", "partOf", "C", 0.8)).unwrap();
        (g, RuleSet::new(vec![CompletionRule::transitive("partOf")]).unwrap())
    }

    #[test]
    fn assert_examples() {
        let mut g = KnowledgeGraph::new();
        g.assert_triple(KnowledgeTriple::new("worker1", REQUESTS, GUIDANCE, 0.9)).unwrap();
        assert_eq!(g.len(), 1);
        g.assert_triple(KnowledgeTriple::new("worker1", REQUESTS, GUIDANCE, 0.4)).unwrap();
        assert_eq!(g.confidence("worker1", REQUESTS, GUIDANCE), Some(0.9));
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert_eq!(
                g.assert_triple(KnowledgeTriple::new("a", "r", "b", bad)).is_err(),
                true
            );
        }
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn transitive_chain_multiplies() {
        let (g, rules) = part_of_chain();
        let inferred = g.complete(&rules);
        assert_eq!(inferred.len(), 1);
        assert_eq!(inferred[0].head, "A");
        assert_eq!(inferred[0].tail, "C");
        assert_eq!(inferred[0].confidence, 0.9 * 0.8);
        assert!((inferred[0].confidence - 0.72).abs() < 1e-12);
    }

    #[test]
    fn competing_derivations_keep_max() {
        // A→B→C at 0.9·0.8 and A→D→C at 1.0·0.9
        let (mut g, rules) = part_of_chain();
        g.assert_triple(KnowledgeTriple::new("A", "partOf", "D", 1.0)).unwrap();
        g.assert_triple(KnowledgeTriple::new("D", "partOf", "C", 0.9)).unwrap();
        let c = g.closure(&rules);
        assert_eq!(c[&("A".into(), "partOf".into(), "C".into())], 0.9);
    }

    #[test]
    fn asserted_higher_confidence_is_not_overwritten() {
        let (mut g, rules) = part_of_chain();
        g.assert_triple(KnowledgeTriple::new("A", "partOf", "C", 0.95)).unwrap();
        assert!(g.complete(&rules).is_empty());
        assert_eq!(g.closure(&rules)[&("A".into(), "partOf".into(), "C".into())], 0.95);
    }

    #[test]
    fn empty_rules_infer_nothing() {
        let (g, _) = part_of_chain();
        assert!(g.complete(&RuleSet::default()).is_empty());
    }

    #[test]
    fn composed_rule_feeds_intent() {
        let mut g = KnowledgeGraph::new();
        g.assert_triple(KnowledgeTriple::new("w1", "assignedTo", "order7", 0.9)).unwrap();
        g.assert_triple(KnowledgeTriple::new("order7", "needs", GUIDANCE, 0.8)).unwrap();
        let rules =
            RuleSet::new(vec![CompletionRule::composed(&["assignedTo", "needs"], REQUESTS)])
                .unwrap();
        let intent = infer_intent(&g, &rules, "w1");
        assert_eq!(intent.intent, Intent::GuidanceRequested);
        assert_eq!(intent.confidence, 0.9 * 0.8);
        assert_eq!(intent.supporting.len(), 1);
    }

    #[test]
    fn intent_examples() {
        let mut g = KnowledgeGraph::new();
        assert_eq!(infer_intent(&g, &RuleSet::default(), "w1"), IntentEstimate::unknown());
        g.assert_triple(KnowledgeTriple::new("w1", REQUESTS, GUIDANCE, 0.9)).unwrap();
        let e = infer_intent(&g, &RuleSet::default(), "w1");
        assert_eq!((e.intent, e.confidence), (Intent::GuidanceRequested, 0.9));
        g.assert_triple(KnowledgeTriple::new("w2", PREFERS, AUTONOMY, 0.3)).unwrap();
        let low = infer_intent(&g, &RuleSet::default(), "w2");
        assert_eq!(low.intent, Intent::Unknown);
        g.assert_triple(KnowledgeTriple::new("w1", PREFERS, AUTONOMY, 0.95)).unwrap();
        assert_eq!(
            infer_intent(&g, &RuleSet::default(), "w1").intent,
            Intent::AutonomyPreferred
        );
    }

    #[test]
    fn query_examples() {
        let (g, rules) = part_of_chain();
        let hits = query(&g, &rules, &Pattern::new(None, Some("partOf"), Some("C")));
        let got: Vec<_> = hits.iter().map(|t| (t.head.as_str(), t.confidence)).collect();
        assert_eq!(got, vec![("A", 0.9 * 0.8), ("B", 0.8)]);
        let one = query(&g, &rules, &Pattern::new(Some("A"), Some("partOf"), Some("B")));
        assert_eq!(one.len(), 1);
        assert!(query(&KnowledgeGraph::new(), &rules, &Pattern::default()).is_empty());
    }

    #[test]
    fn rule_validation() {
        assert!(matches!(
            RuleSet::new(vec![
                CompletionRule::composed(&["a"], "b"),
                CompletionRule::composed(&["b"], "a"),
            ]),
            Err(KnowledgeError::Cyclic(_))
        ));
        assert!(RuleSet::new(vec![CompletionRule::composed(&["a", "b"], "a")]).is_err());
        assert!(RuleSet::new(vec![CompletionRule {
            premises: vec!["x".into()],
            conclusion: "y".into(),
            kind: RuleKind::Transitive,
        }])
        .is_err());
        assert!(RuleSet::new(vec![CompletionRule::composed(&["a", "b", "c"], "d")]).is_err());
    }

    #[test]
    fn strata_respect_dependencies() {
        // locatedIn depends on partOf, which is transitive itself
        let mut g = KnowledgeGraph::new();
        g.assert_triple(KnowledgeTriple::new("bolt", "partOf", "beam", 0.9)).unwrap();
        g.assert_triple(KnowledgeTriple::new("beam", "partOf", "frame", 0.5)).unwrap();
        g.assert_triple(KnowledgeTriple::new("frame", "at", "bench", 1.0)).unwrap();
        let rules = RuleSet::new(vec![
            CompletionRule::composed(&["partOf", "at"], "locatedIn"),
            CompletionRule::transitive("partOf"),
        ])
        .unwrap();
        let c = g.closure(&rules);
        assert_eq!(c[&("bolt".into(), "locatedIn".into(), "bench".into())], 0.9 * 0.5);
    }

    fn arb_graph() -> impl Strategy<Value = Vec<(u8, u8, f64)>> {
        proptest::collection::vec((0u8..6, 0u8..6, 0.01f64..=1.0), 0..14)
    }

    fn build(edges: &[(u8, u8, f64)]) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for (a, b, c) in edges {
            g.assert_triple(KnowledgeTriple::new(&format!("n{a}"), "r", &format!("n{b}"), *c))
                .unwrap();
        }
        g
    }

    proptest! {
        #[test]
        fn completion_is_monotone(edges in arb_graph(), extra in (0u8..6, 0u8..6, 0.01f64..=1.0)) {
            let rules = RuleSet::new(vec![CompletionRule::transitive("r")]).unwrap();
            let g = build(&edges);
            let before = g.closure(&rules);
            let mut bigger = edges.clone();
            bigger.push(extra);
            let after = build(&bigger).closure(&rules);
            for (key, c) in &before {
                prop_assert!(after[key] >= *c);
            }
        }

        #[test]
        fn completion_reaches_fixpoint(edges in arb_graph()) {
            let rules = RuleSet::new(vec![CompletionRule::transitive("r")]).unwrap();
            let g = build(&edges);
            let closure = g.closure(&rules);
            // every chain of two closed facts is dominated, up to the
            // rounding of re-associating the product
            for ((a, _, b), c1) in &closure {
                for ((b2, _, c), c2) in &closure {
                    if b == b2 {
                        let best = closure[&(a.clone(), "r".into(), c.clone())];
                        prop_assert!(best >= c1 * c2 * (1.0 - 4.0 * f64::EPSILON));
                    }
                }
            }
            for t in g.complete(&rules) {
                prop_assert!(t.confidence > 0.0 && t.confidence <= 1.0);
            }
        }

        #[test]
        fn completing_a_completed_graph_adds_no_triples(edges in arb_graph()) {
            let rules = RuleSet::new(vec![CompletionRule::transitive("r")]).unwrap();
            let g = build(&edges);
            let first = g.closure(&rules);
            let mut materialized = g.clone();
            for t in g.complete(&rules) {
                materialized.assert_triple(t).unwrap();
            }
            let second = materialized.closure(&rules);
            prop_assert_eq!(first.len(), second.len());
            for (key, c) in &first {
                let again = second[key];
                prop_assert!(again >= *c && again <= c * (1.0 + 8.0 * f64::EPSILON));
            }
        }
    }
}

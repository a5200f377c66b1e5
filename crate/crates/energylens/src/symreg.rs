//! Genetic-programming symbolic regression over protected expression trees.
//!
//! This is the structure-discovery stage: it searches closed-form
//! expressions over a fixed set of configuration features and reports a
//! Pareto front over (accuracy, size) plus the single best expression. It is
//! an offline discovery tool — the discovered motifs inform the closed-form
//! energy model — not a runtime predictor.
//!
//! All operators are protected (division by ~0, logs of non-positive values,
//! overflowing powers and exponentials are clamped), and every node's output
//! is clamped to `±`[`EVAL_LIMIT`], so evaluation is total: no tree can
//! produce NaN or infinity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, ProfilingRecord};
use crate::derive_seed;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Number of candidate features exposed to the search.
pub const N_SR_FEATURES: usize = 8;

/// Feature names in evaluation order. `parallelism` is `tp * pp`,
/// `tp_plus_pp` is the additive alternative, and `ratio` is
/// `batch_size / max_tokens` (the batch-per-token load).
pub const SR_FEATURE_NAMES: [&str; N_SR_FEATURES] = [
    "tp",
    "pp",
    "parallelism",
    "tp_plus_pp",
    "batch_size",
    "max_tokens",
    "total_input_tokens",
    "ratio",
];

/// Builds the fixed feature vector for one record, in
/// [`SR_FEATURE_NAMES`] order.
pub fn build_features(record: &ProfilingRecord) -> [f64; N_SR_FEATURES] {
    let tp = f64::from(record.tp);
    let pp = f64::from(record.pp);
    let batch = f64::from(record.batch_size);
    let max_tokens = f64::from(record.max_tokens);
    [
        tp,
        pp,
        tp * pp,
        tp + pp,
        batch,
        max_tokens,
        f64::from(record.total_input_tokens),
        batch / max_tokens,
    ]
}

/// Resolves a feature name to its index.
pub fn feature_index(name: &str) -> Result<usize> {
    SR_FEATURE_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::UnknownFeature(name.to_string()))
}

// ---------------------------------------------------------------------------
// Protected operators
// ---------------------------------------------------------------------------

/// Magnitude floor used by the protected operators.
pub const PROTECT_FLOOR: f64 = 1e-9;
/// Upper clamp on exponential arguments.
pub const EXP_ARG_MAX: f64 = 50.0;
/// Symmetric clamp on power exponents.
pub const POW_EXP_LIMIT: f64 = 5.0;
/// Every node's output is clamped to this magnitude, making evaluation
/// closed over the reals (no overflow to infinity is possible).
pub const EVAL_LIMIT: f64 = 1e30;

fn clamp_value(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-EVAL_LIMIT, EVAL_LIMIT)
    }
}

/// Unary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    /// `ln(max(x, 1e-9))`.
    LogProtected,
    /// `exp(min(x, 50))`.
    ExpClamped,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 3] = [UnaryOp::Neg, UnaryOp::LogProtected, UnaryOp::ExpClamped];

    /// Prefix-notation name.
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::LogProtected => "plog",
            UnaryOp::ExpClamped => "pexp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::LogProtected => x.max(PROTECT_FLOOR).ln(),
            UnaryOp::ExpClamped => x.min(EXP_ARG_MAX).exp(),
        }
    }
}

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    /// `n / (sign(d) * max(|d|, 1e-9))`, with `sign(0) = +1`.
    DivProtected,
    /// `max(base, 1e-9) ^ clamp(exp, -5, 5)`.
    PowClamped,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::DivProtected,
        BinaryOp::PowClamped,
    ];

    /// Prefix-notation name.
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::DivProtected => "pdiv",
            BinaryOp::PowClamped => "ppow",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::DivProtected => {
                let sign = if b < 0.0 { -1.0 } else { 1.0 };
                a / (sign * b.abs().max(PROTECT_FLOOR))
            }
            BinaryOp::PowClamped => a
                .max(PROTECT_FLOOR)
                .powf(b.clamp(-POW_EXP_LIMIT, POW_EXP_LIMIT)),
        }
    }
}

// ---------------------------------------------------------------------------
// Expression trees
// ---------------------------------------------------------------------------

/// A symbolic expression over the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ExprNode {
    Constant(f64),
    /// Index into [`SR_FEATURE_NAMES`].
    Feature(usize),
    Unary {
        op: UnaryOp,
        child: Box<ExprNode>,
    },
    Binary {
        op: BinaryOp,
        left: Box<ExprNode>,
        right: Box<ExprNode>,
    },
}

impl ExprNode {
    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        match self {
            ExprNode::Constant(_) | ExprNode::Feature(_) => 1,
            ExprNode::Unary { child, .. } => 1 + child.node_count(),
            ExprNode::Binary { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    /// Tree depth; a single node has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            ExprNode::Constant(_) | ExprNode::Feature(_) => 1,
            ExprNode::Unary { child, .. } => 1 + child.depth(),
            ExprNode::Binary { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Checks the structural invariants: depth within `max_depth`, feature
    /// indices valid, constants finite.
    pub fn validate(&self, max_depth: usize) -> Result<()> {
        let depth = self.depth();
        if depth > max_depth {
            return Err(Error::BoundsViolation {
                name: "expression depth".to_string(),
                value: depth as f64,
                lower: 1.0,
                upper: max_depth as f64,
            });
        }
        self.validate_nodes()
    }

    fn validate_nodes(&self) -> Result<()> {
        match self {
            ExprNode::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::BoundsViolation {
                        name: "expression constant".to_string(),
                        value: *v,
                        lower: f64::NEG_INFINITY,
                        upper: f64::INFINITY,
                    });
                }
                Ok(())
            }
            ExprNode::Feature(i) => {
                if *i >= N_SR_FEATURES {
                    return Err(Error::UnknownFeature(format!("feature index {i}")));
                }
                Ok(())
            }
            ExprNode::Unary { child, .. } => child.validate_nodes(),
            ExprNode::Binary { left, right, .. } => {
                left.validate_nodes()?;
                right.validate_nodes()
            }
        }
    }

    /// Evaluates the tree. Every node's output is clamped to
    /// `±`[`EVAL_LIMIT`] (NaN, impossible with protected operators, would
    /// become 0), so the result is always finite.
    pub fn eval(&self, features: &[f64; N_SR_FEATURES]) -> f64 {
        let v = match self {
            ExprNode::Constant(c) => *c,
            ExprNode::Feature(i) => features[*i],
            ExprNode::Unary { op, child } => op.apply(child.eval(features)),
            ExprNode::Binary { op, left, right } => {
                op.apply(left.eval(features), right.eval(features))
            }
        };
        clamp_value(v)
    }

    /// Lossless prefix-notation serialization with inline constant values,
    /// e.g. `(+ (pdiv 10 (+ (* f_parallelism f_ratio) 1)) 0)`.
    pub fn to_prefix(&self) -> String {
        match self {
            ExprNode::Constant(v) => format!("{v}"),
            ExprNode::Feature(i) => format!("f_{}", SR_FEATURE_NAMES[*i]),
            ExprNode::Unary { op, child } => format!("({} {})", op.name(), child.to_prefix()),
            ExprNode::Binary { op, left, right } => {
                format!("({} {} {})", op.name(), left.to_prefix(), right.to_prefix())
            }
        }
    }

    /// Display form with constants abstracted to `c0, c1, ...` in preorder,
    /// e.g. `(+ (pdiv c0 (+ (* f_parallelism f_ratio) c1)) c2)`, paired with
    /// the constant values. Not parseable; use [`ExprNode::to_prefix`] for a
    /// lossless form.
    pub fn template(&self) -> (String, Vec<f64>) {
        let mut constants = Vec::new();
        let text = self.template_inner(&mut constants);
        (text, constants)
    }

    fn template_inner(&self, constants: &mut Vec<f64>) -> String {
        match self {
            ExprNode::Constant(v) => {
                constants.push(*v);
                format!("c{}", constants.len() - 1)
            }
            ExprNode::Feature(i) => format!("f_{}", SR_FEATURE_NAMES[*i]),
            ExprNode::Unary { op, child } => {
                format!("({} {})", op.name(), child.template_inner(constants))
            }
            ExprNode::Binary { op, left, right } => {
                let l = left.template_inner(constants);
                let r = right.template_inner(constants);
                format!("({} {l} {r})", op.name())
            }
        }
    }

    /// Number of constant leaves.
    pub fn constant_count(&self) -> usize {
        match self {
            ExprNode::Constant(_) => 1,
            ExprNode::Feature(_) => 0,
            ExprNode::Unary { child, .. } => child.constant_count(),
            ExprNode::Binary { left, right, .. } => {
                left.constant_count() + right.constant_count()
            }
        }
    }

    /// Gathers constant values in preorder.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_constants(&mut out);
        out
    }

    fn collect_constants(&self, out: &mut Vec<f64>) {
        match self {
            ExprNode::Constant(v) => out.push(*v),
            ExprNode::Feature(_) => {}
            ExprNode::Unary { child, .. } => child.collect_constants(out),
            ExprNode::Binary { left, right, .. } => {
                left.collect_constants(out);
                right.collect_constants(out);
            }
        }
    }

    fn set_constant(&mut self, index: usize, value: f64) {
        let mut counter = 0;
        self.set_constant_inner(index, value, &mut counter);
    }

    fn set_constant_inner(&mut self, index: usize, value: f64, counter: &mut usize) {
        match self {
            ExprNode::Constant(v) => {
                if *counter == index {
                    *v = value;
                }
                *counter += 1;
            }
            ExprNode::Feature(_) => {}
            ExprNode::Unary { child, .. } => child.set_constant_inner(index, value, counter),
            ExprNode::Binary { left, right, .. } => {
                left.set_constant_inner(index, value, counter);
                right.set_constant_inner(index, value, counter);
            }
        }
    }

    /// Whether the subtree references any feature in `set`.
    fn references_any(&self, set: &[usize]) -> bool {
        match self {
            ExprNode::Constant(_) => false,
            ExprNode::Feature(i) => set.contains(i),
            ExprNode::Unary { child, .. } => child.references_any(set),
            ExprNode::Binary { left, right, .. } => {
                left.references_any(set) || right.references_any(set)
            }
        }
    }

    /// Preorder indices of operator nodes and of leaves.
    fn operator_and_leaf_indices(&self) -> (Vec<usize>, Vec<usize>) {
        fn walk(
            node: &ExprNode,
            next: &mut usize,
            operators: &mut Vec<usize>,
            leaves: &mut Vec<usize>,
        ) {
            let index = *next;
            *next += 1;
            match node {
                ExprNode::Constant(_) | ExprNode::Feature(_) => leaves.push(index),
                ExprNode::Unary { child, .. } => {
                    operators.push(index);
                    walk(child, next, operators, leaves);
                }
                ExprNode::Binary { left, right, .. } => {
                    operators.push(index);
                    walk(left, next, operators, leaves);
                    walk(right, next, operators, leaves);
                }
            }
        }
        let mut operators = Vec::new();
        let mut leaves = Vec::new();
        let mut next = 0;
        walk(self, &mut next, &mut operators, &mut leaves);
        (operators, leaves)
    }

    /// Immutable access to the `index`-th node in preorder.
    fn node_at(&self, index: usize) -> &ExprNode {
        fn walk<'a>(node: &'a ExprNode, remaining: &mut usize) -> Option<&'a ExprNode> {
            if *remaining == 0 {
                return Some(node);
            }
            *remaining -= 1;
            match node {
                ExprNode::Constant(_) | ExprNode::Feature(_) => None,
                ExprNode::Unary { child, .. } => walk(child, remaining),
                ExprNode::Binary { left, right, .. } => {
                    walk(left, remaining).or_else(|| walk(right, remaining))
                }
            }
        }
        let mut remaining = index;
        walk(self, &mut remaining).expect("node index within bounds")
    }

    /// Replaces the `index`-th node (preorder) with `replacement`.
    fn replace_at(&mut self, index: usize, replacement: ExprNode) {
        fn walk(node: &mut ExprNode, remaining: &mut usize, replacement: &mut Option<ExprNode>) {
            if *remaining == 0 {
                *node = replacement.take().expect("single replacement");
                return;
            }
            *remaining -= 1;
            match node {
                ExprNode::Constant(_) | ExprNode::Feature(_) => {}
                ExprNode::Unary { child, .. } => walk(child, remaining, replacement),
                ExprNode::Binary { left, right, .. } => {
                    walk(left, remaining, replacement);
                    if replacement.is_some() {
                        walk(right, remaining, replacement);
                    }
                }
            }
        }
        let mut remaining = index;
        let mut slot = Some(replacement);
        walk(self, &mut remaining, &mut slot);
        debug_assert!(slot.is_none(), "node index within bounds");
    }
}

impl fmt::Display for ExprNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_prefix())
    }
}

// ---------------------------------------------------------------------------
// Prefix parsing
// ---------------------------------------------------------------------------

/// Parses the lossless prefix notation produced by [`ExprNode::to_prefix`].
pub fn parse_prefix(text: &str) -> Result<ExprNode> {
    let spaced = text.replace('(', " ( ").replace(')', " ) ");
    let tokens: Vec<&str> = spaced.split_whitespace().collect();
    let mut pos = 0;
    let expr = parse_tokens(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(Error::ExprParse(format!(
            "trailing tokens after expression: `{}`",
            tokens[pos..].join(" ")
        )));
    }
    Ok(expr)
}

fn parse_tokens(tokens: &[&str], pos: &mut usize) -> Result<ExprNode> {
    let token = tokens
        .get(*pos)
        .ok_or_else(|| Error::ExprParse("unexpected end of input".to_string()))?;
    *pos += 1;
    if *token == "(" {
        let op = tokens
            .get(*pos)
            .ok_or_else(|| Error::ExprParse("missing operator after `(`".to_string()))?;
        *pos += 1;
        let node = if let Some(unary) = UnaryOp::ALL.iter().find(|o| o.name() == *op) {
            ExprNode::Unary {
                op: *unary,
                child: Box::new(parse_tokens(tokens, pos)?),
            }
        } else if let Some(binary) = BinaryOp::ALL.iter().find(|o| o.name() == *op) {
            ExprNode::Binary {
                op: *binary,
                left: Box::new(parse_tokens(tokens, pos)?),
                right: Box::new(parse_tokens(tokens, pos)?),
            }
        } else {
            return Err(Error::ExprParse(format!("unknown operator `{op}`")));
        };
        match tokens.get(*pos) {
            Some(&")") => {
                *pos += 1;
                Ok(node)
            }
            other => Err(Error::ExprParse(format!(
                "expected `)`, found {}",
                other.map_or("end of input".to_string(), |t| format!("`{t}`"))
            ))),
        }
    } else if *token == ")" {
        Err(Error::ExprParse("unexpected `)`".to_string()))
    } else if let Some(name) = token.strip_prefix("f_") {
        Ok(ExprNode::Feature(feature_index(name)?))
    } else {
        let value: f64 = token
            .parse()
            .map_err(|_| Error::ExprParse(format!("expected number or feature, found `{token}`")))?;
        if !value.is_finite() {
            return Err(Error::ExprParse(format!("non-finite constant `{token}`")));
        }
        Ok(ExprNode::Constant(value))
    }
}

// ---------------------------------------------------------------------------
// Simplification
// ---------------------------------------------------------------------------

/// Conservative simplification: constant folding (using the exact protected
/// evaluation semantics) and a few identities that are bit-compatible with
/// the original tree (`x*1`, `1*x`, `x*0`, `0*x`, `x+0`, `0+x`, `x-0`,
/// `x/1`, `neg(neg(x))`). The result evaluates identically to the input
/// everywhere, and never has more nodes.
pub fn simplify(expr: &ExprNode) -> ExprNode {
    match expr {
        ExprNode::Constant(_) | ExprNode::Feature(_) => expr.clone(),
        ExprNode::Unary { op, child } => {
            let child = simplify(child);
            if let ExprNode::Constant(v) = child {
                return ExprNode::Constant(clamp_value(op.apply(clamp_value(v))));
            }
            if *op == UnaryOp::Neg {
                if let ExprNode::Unary {
                    op: UnaryOp::Neg,
                    child: inner,
                } = &child
                {
                    return (**inner).clone();
                }
            }
            ExprNode::Unary {
                op: *op,
                child: Box::new(child),
            }
        }
        ExprNode::Binary { op, left, right } => {
            let left = simplify(left);
            let right = simplify(right);
            if let (ExprNode::Constant(a), ExprNode::Constant(b)) = (&left, &right) {
                return ExprNode::Constant(clamp_value(
                    op.apply(clamp_value(*a), clamp_value(*b)),
                ));
            }
            let is_const = |node: &ExprNode, want: f64| {
                matches!(node, ExprNode::Constant(v) if *v == want)
            };
            match op {
                BinaryOp::Mul => {
                    if is_const(&right, 1.0) {
                        return left;
                    }
                    if is_const(&left, 1.0) {
                        return right;
                    }
                    if is_const(&right, 0.0) || is_const(&left, 0.0) {
                        return ExprNode::Constant(0.0);
                    }
                }
                BinaryOp::Add => {
                    if is_const(&right, 0.0) {
                        return left;
                    }
                    if is_const(&left, 0.0) {
                        return right;
                    }
                }
                BinaryOp::Sub => {
                    if is_const(&right, 0.0) {
                        return left;
                    }
                }
                BinaryOp::DivProtected => {
                    if is_const(&right, 1.0) {
                        return left;
                    }
                }
                BinaryOp::PowClamped => {}
            }
            ExprNode::Binary {
                op: *op,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Motif detection
// ---------------------------------------------------------------------------

/// Structural motifs the discovery stage looks for in simplified trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotifHits {
    /// A protected division whose denominator involves a parallelism-family
    /// feature (`tp`, `pp`, `parallelism`, `tp_plus_pp`) or the
    /// batch-per-token `ratio`: token load spread over parallel capacity.
    pub ratio_of_token_load: bool,
    /// A protected log applied to a feature-dependent subtree: logarithmic
    /// compression of a workload quantity.
    pub log_compression: bool,
}

/// Pattern-matches the two recurring structural motifs. Intended to run on
/// [`simplify`]-ed trees so that constant-only subtrees are already folded.
pub fn detect_motifs(expr: &ExprNode) -> MotifHits {
    const DENOMINATOR_FEATURES: [usize; 5] = [0, 1, 2, 3, 7];
    let mut hits = MotifHits {
        ratio_of_token_load: false,
        log_compression: false,
    };
    fn walk(node: &ExprNode, hits: &mut MotifHits, denominator_features: &[usize]) {
        match node {
            ExprNode::Constant(_) | ExprNode::Feature(_) => {}
            ExprNode::Unary { op, child } => {
                if *op == UnaryOp::LogProtected
                    && child.references_any(&[0, 1, 2, 3, 4, 5, 6, 7])
                {
                    hits.log_compression = true;
                }
                walk(child, hits, denominator_features);
            }
            ExprNode::Binary { op, left, right } => {
                if *op == BinaryOp::DivProtected && right.references_any(denominator_features) {
                    hits.ratio_of_token_load = true;
                }
                walk(left, hits, denominator_features);
                walk(right, hits, denominator_features);
            }
        }
    }
    walk(expr, &mut hits, &DENOMINATOR_FEATURES);
    hits
}

// ---------------------------------------------------------------------------
// Search configuration
// ---------------------------------------------------------------------------

/// Genetic-programming hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SRConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    /// Probability that a child is produced by subtree crossover.
    pub crossover_rate: f64,
    /// Probability that a child is produced by mutation; the remainder
    /// (`1 - crossover_rate - mutation_rate`) is plain reproduction.
    pub mutation_rate: f64,
    /// Complexity penalty per node added to the fitness MSE. `None` derives
    /// `1e-3 * var(target)` from the data.
    pub parsimony_coefficient: Option<f64>,
    pub max_depth: usize,
    pub seed: u64,
    /// Feature names the search may use (a subset of
    /// [`SR_FEATURE_NAMES`]).
    pub feature_set: Vec<String>,
}

impl Default for SRConfig {
    fn default() -> Self {
        SRConfig {
            population_size: 500,
            generations: 40,
            tournament_size: 5,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            parsimony_coefficient: None,
            max_depth: 8,
            seed: 42,
            feature_set: SR_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SRConfig {
    /// Validates sizes, rates, and feature names.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("population_size", self.population_size),
            ("generations", self.generations),
            ("tournament_size", self.tournament_size),
            ("max_depth", self.max_depth),
        ] {
            if value < 1 {
                return Err(Error::BoundsViolation {
                    name: name.to_string(),
                    value: value as f64,
                    lower: 1.0,
                    upper: f64::INFINITY,
                });
            }
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
                return Err(Error::BoundsViolation {
                    name: name.to_string(),
                    value: rate,
                    lower: 0.0,
                    upper: 1.0,
                });
            }
        }
        if self.crossover_rate + self.mutation_rate > 1.0 {
            return Err(Error::BoundsViolation {
                name: "crossover_rate + mutation_rate".to_string(),
                value: self.crossover_rate + self.mutation_rate,
                lower: 0.0,
                upper: 1.0,
            });
        }
        if let Some(c) = self.parsimony_coefficient {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::BoundsViolation {
                    name: "parsimony_coefficient".to_string(),
                    value: c,
                    lower: 0.0,
                    upper: f64::INFINITY,
                });
            }
        }
        if self.feature_set.is_empty() {
            return Err(Error::UnknownFeature(
                "feature_set must not be empty".to_string(),
            ));
        }
        for name in &self.feature_set {
            feature_index(name)?;
        }
        Ok(())
    }

    fn active_features(&self) -> Result<Vec<usize>> {
        let mut indices: Vec<usize> = self
            .feature_set
            .iter()
            .map(|n| feature_index(n))
            .collect::<Result<_>>()?;
        indices.sort_unstable();
        indices.dedup();
        Ok(indices)
    }
}

// ---------------------------------------------------------------------------
// Search result
// ---------------------------------------------------------------------------

/// One point on the accuracy/size Pareto front.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoMember {
    /// Simplified expression.
    pub expression: ExprNode,
    /// MSE on the held-out validation split.
    pub test_mse: f64,
    /// Node count of the simplified expression.
    pub node_count: usize,
}

/// Outcome of a symbolic-regression run.
#[derive(Debug, Clone, PartialEq)]
pub struct SRResult {
    /// Sorted by node count; MSE strictly improves along the front, so no
    /// member dominates another.
    pub pareto_front: Vec<ParetoMember>,
    /// The expression minimizing penalized fitness, simplified.
    pub best: ExprNode,
    /// Penalized fitness of `best` (validation MSE plus the parsimony
    /// penalty).
    pub best_fitness: f64,
    /// Validation MSE of `best`.
    pub best_test_mse: f64,
    /// Best penalized fitness after each generation; non-increasing thanks
    /// to elitism.
    pub fitness_history: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Genetic programming engine
// ---------------------------------------------------------------------------

/// Records required before a search may run.
const MIN_SR_RECORDS: usize = 20;
/// Fraction of records held out as the validation split.
const VALIDATION_FRACTION: f64 = 0.25;
/// How many of the fittest individuals receive the full constant-refinement
/// pass each generation.
const REFINE_TOP: usize = 8;
/// Coordinate-descent sweeps for elite expressions.
const ELITE_SWEEPS: usize = 30;
/// Coordinate-descent sweeps applied to every other refinable expression.
const QUICK_SWEEPS: usize = 3;
/// Refinement skips expressions with more constants than this.
const MAX_REFINED_CONSTANTS: usize = 16;
/// The cheap per-expression pass only touches reasonably small trees.
const QUICK_REFINE_MAX_CONSTANTS: usize = 6;
const QUICK_REFINE_MAX_NODES: usize = 24;
/// Probability that a breeding parent is drawn from the size-stratified
/// archive of best-so-far expressions instead of the current population.
const ARCHIVE_PARENT_RATE: f64 = 0.3;
/// How many of the most accurate archive members seed the per-generation
/// structural neighborhood scan.
const NEIGHBOR_SOURCES: usize = 4;
/// The neighborhood scan skips trees beyond these limits.
const NEIGHBOR_MAX_NODES: usize = 20;
const NEIGHBOR_MAX_CONSTANTS: usize = 8;
/// The most promising neighbors from each scan get the full refinement.
const NEIGHBOR_FINALISTS: usize = 4;
/// Subtree-mutation replacement depth.
const MUTATION_SUBTREE_DEPTH: usize = 3;
/// Retry budget when breeding produces an over-deep tree.
const DEPTH_RETRIES: usize = 8;

/// Seed streams (mixed through the crate-wide seed derivation).
const STREAM_SPLIT: u64 = 0x5EED_0001;
const STREAM_INIT_BASE: u64 = 0x1000_0000;
const STREAM_BREED_BASE: u64 = 0x4000_0000;

struct Split {
    fit_x: Vec<[f64; N_SR_FEATURES]>,
    fit_y: Vec<f64>,
    val_x: Vec<[f64; N_SR_FEATURES]>,
    val_y: Vec<f64>,
}

fn split_data(data: &Dataset, seed: u64) -> Split {
    let n = data.len();
    let val_n = ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SPLIT));
    let val_idx: BTreeSet<usize> = rand::seq::index::sample(&mut rng, n, val_n)
        .iter()
        .collect();
    let mut split = Split {
        fit_x: Vec::with_capacity(n - val_n),
        fit_y: Vec::with_capacity(n - val_n),
        val_x: Vec::with_capacity(val_n),
        val_y: Vec::with_capacity(val_n),
    };
    for (i, record) in data.records.iter().enumerate() {
        let x = build_features(record);
        if val_idx.contains(&i) {
            split.val_x.push(x);
            split.val_y.push(record.energy_j);
        } else {
            split.fit_x.push(x);
            split.fit_y.push(record.energy_j);
        }
    }
    split
}

fn mse(expr: &ExprNode, xs: &[[f64; N_SR_FEATURES]], ys: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let d = expr.eval(x) - y;
            d * d
        })
        .sum();
    total / ys.len() as f64
}

/// Pattern-search refinement of the expression's constants: per constant,
/// try a step in each direction, expand while it keeps improving, shrink the
/// step on failure. `objective` is minimized (lower is better).
fn refine_constants<F: Fn(&ExprNode) -> f64>(expr: &mut ExprNode, objective: F, sweeps: usize) {
    let n_constants = expr.constant_count();
    if n_constants == 0 || n_constants > MAX_REFINED_CONSTANTS {
        return;
    }
    let mut values = expr.constants();
    let mut steps: Vec<f64> = values.iter().map(|c| 0.25 * c.abs().max(1.0)).collect();
    let mut best = objective(expr);
    for _ in 0..sweeps {
        for k in 0..n_constants {
            let mut improved = false;
            'directions: for dir in [1.0, -1.0] {
                let mut step = steps[k];
                let mut candidate = values[k] + dir * step;
                expr.set_constant(k, candidate);
                let mut m = objective(expr);
                if m < best {
                    // Keep expanding in this direction while it helps.
                    let mut accepted = candidate;
                    best = m;
                    for _ in 0..20 {
                        step *= 2.0;
                        candidate = values[k] + dir * step;
                        if !candidate.is_finite() {
                            break;
                        }
                        expr.set_constant(k, candidate);
                        m = objective(expr);
                        if m < best {
                            best = m;
                            accepted = candidate;
                        } else {
                            break;
                        }
                    }
                    values[k] = accepted;
                    expr.set_constant(k, accepted);
                    steps[k] = step;
                    improved = true;
                    break 'directions;
                }
            }
            if !improved {
                expr.set_constant(k, values[k]);
                steps[k] *= 0.5;
            }
        }
    }
}

/// Optimal affine calibration `a * e(x) + b` for an expression against
/// targets, in closed form (ordinary least squares on two parameters).
/// Degenerate cases (constant expression output) fall back to the target
/// mean. The calibration is embedded into reported expressions, so the GP
/// only has to discover shapes up to an affine map.
#[derive(Debug, Clone, Copy)]
struct Scaling {
    a: f64,
    b: f64,
}

fn fit_scaling(expr: &ExprNode, xs: &[[f64; N_SR_FEATURES]], ys: &[f64]) -> Scaling {
    let n = ys.len() as f64;
    let mut sum_e = 0.0;
    let mut sum_y = 0.0;
    let mut sum_ee = 0.0;
    let mut sum_ey = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = expr.eval(x);
        sum_e += e;
        sum_y += y;
        sum_ee += e * e;
        sum_ey += e * y;
    }
    let mean_e = sum_e / n;
    let mean_y = sum_y / n;
    let var_e = sum_ee / n - mean_e * mean_e;
    let cov = sum_ey / n - mean_e * mean_y;
    let a = cov / var_e;
    if var_e > 0.0 && a.is_finite() {
        let b = mean_y - a * mean_e;
        if b.is_finite() {
            return Scaling { a, b };
        }
    }
    Scaling { a: 0.0, b: mean_y }
}

fn scaled_mse(
    expr: &ExprNode,
    scaling: Scaling,
    xs: &[[f64; N_SR_FEATURES]],
    ys: &[f64],
) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let d = clamp_value(scaling.a * expr.eval(x) + scaling.b) - y;
            d * d
        })
        .sum();
    total / ys.len() as f64
}

/// Embeds the affine calibration into the tree and simplifies, producing the
/// expression actually reported to callers.
fn wrap_scaling(expr: &ExprNode, scaling: Scaling) -> ExprNode {
    simplify(&ExprNode::Binary {
        op: BinaryOp::Add,
        left: Box::new(ExprNode::Binary {
            op: BinaryOp::Mul,
            left: Box::new(ExprNode::Constant(scaling.a)),
            right: Box::new(expr.clone()),
        }),
        right: Box::new(ExprNode::Constant(scaling.b)),
    })
}

/// One fully scored individual: the raw tree used for breeding, plus the
/// calibrated (wrapped, simplified) expression that the fitness, archive,
/// and reported results all refer to.
struct Scored {
    raw: ExprNode,
    wrapped: ExprNode,
    fitness: f64,
    mse: f64,
}

struct Engine<'a> {
    split: &'a Split,
    active: &'a [usize],
    max_depth: usize,
    parsimony: f64,
}

impl Engine<'_> {
    /// Calibrates the expression on the fit split, embeds the calibration,
    /// and computes validation MSE and penalized fitness of the reported
    /// form.
    fn score(&self, raw: ExprNode) -> Scored {
        let scaling = fit_scaling(&raw, &self.split.fit_x, &self.split.fit_y);
        let wrapped = wrap_scaling(&raw, scaling);
        let m = mse(&wrapped, &self.split.val_x, &self.split.val_y);
        Scored {
            fitness: m + self.parsimony * wrapped.node_count() as f64,
            mse: m,
            raw,
            wrapped,
        }
    }

    /// Refinement objective: calibrated MSE on the fit split.
    fn fit_objective(&self, expr: &ExprNode) -> f64 {
        let scaling = fit_scaling(expr, &self.split.fit_x, &self.split.fit_y);
        scaled_mse(expr, scaling, &self.split.fit_x, &self.split.fit_y)
    }

    fn random_terminal(&self, rng: &mut ChaCha8Rng) -> ExprNode {
        if rng.random::<f64>() < 0.7 {
            ExprNode::Feature(self.active[rng.random_range(0..self.active.len())])
        } else {
            ExprNode::Constant(rng.random_range(-10.0..10.0))
        }
    }

    /// Grows a random tree within `depth_budget`. `full` forces operators
    /// until the budget is exhausted.
    fn random_tree(&self, rng: &mut ChaCha8Rng, depth_budget: usize, full: bool) -> ExprNode {
        if depth_budget <= 1 || (!full && rng.random::<f64>() < 0.3) {
            return self.random_terminal(rng);
        }
        if rng.random::<f64>() < 0.75 {
            ExprNode::Binary {
                op: BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())],
                left: Box::new(self.random_tree(rng, depth_budget - 1, full)),
                right: Box::new(self.random_tree(rng, depth_budget - 1, full)),
            }
        } else {
            ExprNode::Unary {
                op: UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())],
                child: Box::new(self.random_tree(rng, depth_budget - 1, full)),
            }
        }
    }

    fn tournament<'p>(
        &self,
        scored: &'p [Scored],
        size: usize,
        rng: &mut ChaCha8Rng,
    ) -> &'p ExprNode {
        let mut winner = rng.random_range(0..scored.len());
        for _ in 1..size {
            let i = rng.random_range(0..scored.len());
            if scored[i]
                .fitness
                .total_cmp(&scored[winner].fitness)
                .then(i.cmp(&winner))
                .is_lt()
            {
                winner = i;
            }
        }
        &scored[winner].raw
    }

    /// Picks a breeding point with the conventional bias toward operator
    /// nodes (90%) so that crossover exchanges structure, not just leaves.
    fn pick_node(&self, expr: &ExprNode, rng: &mut ChaCha8Rng) -> usize {
        let (operators, leaves) = expr.operator_and_leaf_indices();
        let pool = if operators.is_empty() || (!leaves.is_empty() && rng.random::<f64>() < 0.1) {
            &leaves
        } else {
            &operators
        };
        pool[rng.random_range(0..pool.len())]
    }

    fn crossover(
        &self,
        parent_a: &ExprNode,
        parent_b: &ExprNode,
        rng: &mut ChaCha8Rng,
    ) -> ExprNode {
        for _ in 0..DEPTH_RETRIES {
            let mut child = parent_a.clone();
            let at = self.pick_node(&child, rng);
            let graft = parent_b.node_at(self.pick_node(parent_b, rng));
            child.replace_at(at, graft.clone());
            if child.depth() <= self.max_depth {
                return child;
            }
        }
        parent_a.clone()
    }

    fn mutate(&self, parent: &ExprNode, rng: &mut ChaCha8Rng) -> ExprNode {
        let mut child = parent.clone();
        let kind = rng.random::<f64>();
        if kind < 0.4 {
            // Point mutation: rewrite one node in place, arity preserved.
            let at = rng.random_range(0..child.node_count());
            let replacement = match child.node_at(at) {
                ExprNode::Constant(c) => {
                    let scale = c.abs().max(1.0);
                    ExprNode::Constant(c + (rng.random::<f64>() - 0.5) * 2.0 * scale)
                }
                ExprNode::Feature(_) => self.random_terminal(rng),
                ExprNode::Unary { child: inner, .. } => ExprNode::Unary {
                    op: UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())],
                    child: inner.clone(),
                },
                ExprNode::Binary { left, right, .. } => ExprNode::Binary {
                    op: BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())],
                    left: left.clone(),
                    right: right.clone(),
                },
            };
            child.replace_at(at, replacement);
            child
        } else if kind < 0.7 {
            // Subtree mutation: replace one node with a fresh random tree.
            for _ in 0..DEPTH_RETRIES {
                let mut candidate = parent.clone();
                let at = self.pick_node(&candidate, rng);
                let graft = self.random_tree(rng, MUTATION_SUBTREE_DEPTH, false);
                candidate.replace_at(at, graft);
                if candidate.depth() <= self.max_depth {
                    return candidate;
                }
            }
            child
        } else if kind < 0.9 {
            // Insert mutation: lift a subtree S into (S + c) or (S * c),
            // creating the offset/scale building blocks that pure crossover
            // rarely assembles.
            for _ in 0..DEPTH_RETRIES {
                let mut candidate = parent.clone();
                let at = rng.random_range(0..candidate.node_count());
                let subtree = candidate.node_at(at).clone();
                let op = if rng.random::<f64>() < 0.5 {
                    BinaryOp::Add
                } else {
                    BinaryOp::Mul
                };
                let constant = ExprNode::Constant(rng.random_range(-10.0..10.0));
                let (left, right) = if rng.random::<f64>() < 0.5 {
                    (subtree, constant)
                } else {
                    (constant, subtree)
                };
                candidate.replace_at(
                    at,
                    ExprNode::Binary {
                        op,
                        left: Box::new(left),
                        right: Box::new(right),
                    },
                );
                if candidate.depth() <= self.max_depth {
                    return candidate;
                }
            }
            child
        } else {
            // Hoist mutation: promote a random subtree to the root, the
            // standard anti-bloat move.
            let at = rng.random_range(0..child.node_count());
            child.node_at(at).clone()
        }
    }
}

/// Enumerates every depth-2 building block over the active features: each
/// unary operator applied to each feature, plus each binary operator over
/// feature pairs (unordered for the commutative operators, ordered
/// otherwise). Seeding the initial population with these instead of only
/// random trees gives calibration and crossover systematic raw material.
fn building_blocks(active: &[usize]) -> Vec<ExprNode> {
    let mut blocks = Vec::new();

    // Saturation and compression templates: c/(X + c') and log(X + c')
    // where X is a single feature or a product of two features. These are
    // the two structural motifs this tool is built to surface, seeded as
    // refinable shapes (the constants start at 1 and earn their keep
    // through the ordinary coordinate-descent and calibration machinery).
    let mut units: Vec<ExprNode> = active.iter().map(|&i| ExprNode::Feature(i)).collect();
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a..] {
            units.push(ExprNode::Binary {
                op: BinaryOp::Mul,
                left: Box::new(ExprNode::Feature(i)),
                right: Box::new(ExprNode::Feature(j)),
            });
        }
    }
    for unit in units {
        let offset = ExprNode::Binary {
            op: BinaryOp::Add,
            left: Box::new(unit),
            right: Box::new(ExprNode::Constant(1.0)),
        };
        blocks.push(ExprNode::Binary {
            op: BinaryOp::DivProtected,
            left: Box::new(ExprNode::Constant(1.0)),
            right: Box::new(offset.clone()),
        });
        blocks.push(ExprNode::Unary {
            op: UnaryOp::LogProtected,
            child: Box::new(offset),
        });
    }

    for op in UnaryOp::ALL {
        for &i in active {
            blocks.push(ExprNode::Unary {
                op,
                child: Box::new(ExprNode::Feature(i)),
            });
        }
    }
    for op in BinaryOp::ALL {
        let commutative = matches!(op, BinaryOp::Add | BinaryOp::Mul);
        for &i in active {
            for &j in active {
                if commutative && j < i {
                    continue;
                }
                if !commutative && j == i {
                    continue;
                }
                blocks.push(ExprNode::Binary {
                    op,
                    left: Box::new(ExprNode::Feature(i)),
                    right: Box::new(ExprNode::Feature(j)),
                });
            }
        }
    }
    blocks
}

/// Offers an expression to the per-size archive and the best-so-far slot.
fn admit(
    archive: &mut BTreeMap<usize, (f64, ExprNode)>,
    best: &mut Option<(f64, f64, ExprNode)>,
    parsimony: f64,
    m: f64,
    expr: &ExprNode,
) {
    let nodes = expr.node_count();
    match archive.get(&nodes) {
        Some((existing, _)) if *existing <= m => {}
        _ => {
            archive.insert(nodes, (m, expr.clone()));
        }
    }
    let fitness = m + parsimony * nodes as f64;
    let better = match best {
        None => true,
        Some((f, _, e)) => fitness < *f || (fitness == *f && nodes < e.node_count()),
    };
    if better {
        *best = Some((fitness, m, expr.clone()));
    }
}

/// Deterministic structural local search around the most accurate archive
/// members: every single operator swap, optionally combined with an additive
/// offset inserted into the right operand, is quick-refined and offered back
/// to the archive. This systematically explores one-edit rewrites (for
/// example a clamped power into a protected division with an offset
/// denominator) that blind crossover assembles only by luck.
fn scan_neighbors(
    engine: &Engine<'_>,
    archive: &mut BTreeMap<usize, (f64, ExprNode)>,
    best: &mut Option<(f64, f64, ExprNode)>,
    parsimony: f64,
) {
    let split = engine.split;
    let mut sources: Vec<(f64, ExprNode)> = archive
        .values()
        .filter(|(_, expr)| {
            expr.node_count() <= NEIGHBOR_MAX_NODES
                && expr.constant_count() <= NEIGHBOR_MAX_CONSTANTS
        })
        .cloned()
        .collect();
    sources.sort_by(|a, b| a.0.total_cmp(&b.0));
    sources.truncate(NEIGHBOR_SOURCES);

    let raw_fit = |e: &ExprNode| mse(e, &split.fit_x, &split.fit_y);
    let mut finalists: Vec<(f64, ExprNode)> = Vec::new();
    for (_, source) in &sources {
        let (operators, _) = source.operator_and_leaf_indices();
        for &at in &operators {
            let ExprNode::Binary {
                op: current,
                left,
                right,
            } = source.node_at(at)
            else {
                continue;
            };
            for op in BinaryOp::ALL {
                for with_offset in [false, true] {
                    if !with_offset && op == *current {
                        continue;
                    }
                    let new_right = if with_offset {
                        Box::new(ExprNode::Binary {
                            op: BinaryOp::Add,
                            left: right.clone(),
                            right: Box::new(ExprNode::Constant(1.0)),
                        })
                    } else {
                        right.clone()
                    };
                    let mut candidate = source.clone();
                    candidate.replace_at(
                        at,
                        ExprNode::Binary {
                            op,
                            left: left.clone(),
                            right: new_right,
                        },
                    );
                    if candidate.depth() > engine.max_depth {
                        continue;
                    }
                    refine_constants(&mut candidate, raw_fit, QUICK_SWEEPS);
                    let candidate = simplify(&candidate);
                    let m = mse(&candidate, &split.val_x, &split.val_y);
                    admit(archive, best, parsimony, m, &candidate);
                    finalists.push((m, candidate));
                }
            }
        }
    }

    // The quick pass above often under-sells a good structure whose constants
    // start far from their optimum, so the most promising few neighbors get
    // the same two-phase treatment as population elites.
    finalists.sort_by(|a, b| a.0.total_cmp(&b.0));
    finalists.truncate(NEIGHBOR_FINALISTS);
    for (_, mut candidate) in finalists {
        refine_constants(&mut candidate, raw_fit, ELITE_SWEEPS / 2);
        refine_constants(&mut candidate, raw_fit, ELITE_SWEEPS / 2);
        let candidate = simplify(&candidate);
        let m = mse(&candidate, &split.val_x, &split.val_y);
        admit(archive, best, parsimony, m, &candidate);
    }
}

/// Runs generational genetic programming against the dataset's energy
/// column and returns the accuracy/size Pareto front plus the single best
/// expression.
///
/// The data is split deterministically (seeded) into a fit split and a
/// validation split. Each candidate tree is calibrated on the fit split with
/// a closed-form affine map (embedded into the reported expression) and its
/// constants are refined there by short coordinate-descent passes; selection
/// fitness is `validation MSE + parsimony * node_count` of the calibrated
/// expression, and all reported MSE values are validation MSEs. Results are
/// byte-reproducible per seed.
pub fn run_sr(data: &Dataset, config: &SRConfig) -> Result<SRResult> {
    config.validate()?;
    if data.len() < MIN_SR_RECORDS {
        return Err(Error::InsufficientData {
            needed: MIN_SR_RECORDS,
            got: data.len(),
        });
    }
    let active = config.active_features()?;
    let split = split_data(data, config.seed);

    let energies = data.energies();
    let mean_y = energies.iter().sum::<f64>() / energies.len() as f64;
    let var_y =
        energies.iter().map(|y| (y - mean_y) * (y - mean_y)).sum::<f64>() / energies.len() as f64;
    let parsimony = config.parsimony_coefficient.unwrap_or(1e-3 * var_y);

    let engine = Engine {
        split: &split,
        active: &active,
        max_depth: config.max_depth,
        parsimony,
    };

    // Initial population: the mean-energy constant baseline, then the
    // deterministic depth-2 building blocks, then ramped half-and-half
    // random trees, each from its own derived seed.
    let fit_mean = split.fit_y.iter().sum::<f64>() / split.fit_y.len() as f64;
    let mut population: Vec<ExprNode> = Vec::with_capacity(config.population_size);
    population.push(ExprNode::Constant(fit_mean));
    for block in building_blocks(&engine.active) {
        if population.len() >= config.population_size {
            break;
        }
        population.push(block);
    }
    for i in population.len()..config.population_size {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_INIT_BASE + i as u64));
        let depth = 2 + i % 5.min(config.max_depth - 1).max(1);
        let full = i % 2 == 0;
        population.push(engine.random_tree(&mut rng, depth.min(config.max_depth), full));
    }

    // Archive of the best (by validation MSE) simplified expression per node
    // count, across all generations.
    let mut archive: BTreeMap<usize, (f64, ExprNode)> = BTreeMap::new();
    let mut best_overall: Option<(f64, f64, ExprNode)> = None; // (fitness, mse, expr)
    let mut fitness_history = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        // Score everyone.
        let mut scored: Vec<Scored> = population.drain(..).map(|e| engine.score(e)).collect();

        // Every reasonably small expression receives a quick
        // constant-refinement pass against the fit split; a refinement is
        // kept only when it improves validation fitness, which also keeps
        // elitism monotone.
        for entry in scored.iter_mut() {
            let n_constants = entry.raw.constant_count();
            if n_constants == 0
                || n_constants > QUICK_REFINE_MAX_CONSTANTS
                || entry.raw.node_count() > QUICK_REFINE_MAX_NODES
            {
                continue;
            }
            let mut refined = entry.raw.clone();
            refine_constants(&mut refined, |e| engine.fit_objective(e), QUICK_SWEEPS);
            let candidate = engine.score(refined);
            if candidate.fitness < entry.fitness {
                *entry = candidate;
            }
        }

        // The current leaders get the full-depth pass on top.
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| {
            scored[a]
                .fitness
                .total_cmp(&scored[b].fitness)
                .then(a.cmp(&b))
        });
        for &i in order.iter().take(REFINE_TOP) {
            let mut refined = scored[i].raw.clone();
            // Two phases with re-expanded step sizes converge much better in
            // curved valleys than one long monotonically-shrinking pass.
            refine_constants(&mut refined, |e| engine.fit_objective(e), ELITE_SWEEPS / 2);
            refine_constants(&mut refined, |e| engine.fit_objective(e), ELITE_SWEEPS / 2);
            let candidate = engine.score(refined);
            if candidate.fitness < scored[i].fitness {
                scored[i] = candidate;
            }
        }

        // Archive calibrated forms and track the best individual, then walk
        // the structural neighborhood of the best archived shapes.
        for entry in &scored {
            admit(
                &mut archive,
                &mut best_overall,
                parsimony,
                entry.mse,
                &entry.wrapped,
            );
        }
        scan_neighbors(&engine, &mut archive, &mut best_overall, parsimony);
        let gen_best = scored
            .iter()
            .map(|s| s.fitness)
            .fold(f64::INFINITY, f64::min);
        fitness_history.push(gen_best);

        if generation + 1 == config.generations {
            break;
        }

        // Breed the next generation: elite first, then tournament offspring.
        // Parents are occasionally drawn from the size-stratified archive so
        // accurate shapes of every size stay available as donors even after
        // the population converges. Children are born simplified, which
        // keeps dead weight from accumulating.
        let elite_index = (0..scored.len())
            .min_by(|&a, &b| {
                scored[a]
                    .fitness
                    .total_cmp(&scored[b].fitness)
                    .then(a.cmp(&b))
            })
            .expect("population non-empty");
        let archive_pool: Vec<ExprNode> =
            archive.values().map(|(_, expr)| expr.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            config.seed,
            STREAM_BREED_BASE + generation as u64,
        ));
        let mut next = Vec::with_capacity(config.population_size);
        next.push(scored[elite_index].raw.clone());
        while next.len() < config.population_size {
            let roll = rng.random::<f64>();
            let pick = |rng: &mut ChaCha8Rng| -> &ExprNode {
                if !archive_pool.is_empty() && rng.random::<f64>() < ARCHIVE_PARENT_RATE {
                    &archive_pool[rng.random_range(0..archive_pool.len())]
                } else {
                    engine.tournament(&scored, config.tournament_size, rng)
                }
            };
            let child = if roll < config.crossover_rate {
                let a = pick(&mut rng).clone();
                let b = pick(&mut rng).clone();
                engine.crossover(&a, &b, &mut rng)
            } else if roll < config.crossover_rate + config.mutation_rate {
                let parent = pick(&mut rng).clone();
                engine.mutate(&parent, &mut rng)
            } else {
                pick(&mut rng).clone()
            };
            next.push(simplify(&child));
        }
        population = next;
    }

    // Final polish: one more constant-refinement pass over each archived
    // expression (node counts are unaffected — only constant values move),
    // kept when it improves the validation MSE.
    for (m, expr) in archive.values_mut() {
        if expr.constant_count() == 0 {
            continue;
        }
        let mut polished = expr.clone();
        let raw_fit = |e: &ExprNode| mse(e, &split.fit_x, &split.fit_y);
        refine_constants(&mut polished, raw_fit, ELITE_SWEEPS / 2);
        refine_constants(&mut polished, raw_fit, ELITE_SWEEPS / 2);
        let polished_mse = mse(&polished, &split.val_x, &split.val_y);
        if polished_mse < *m {
            *m = polished_mse;
            *expr = polished;
            let nodes = expr.node_count();
            let fitness = *m + parsimony * nodes as f64;
            let better = match &best_overall {
                None => true,
                Some((f, _, e)) => fitness < *f || (fitness == *f && nodes < e.node_count()),
            };
            if better {
                best_overall = Some((fitness, *m, expr.clone()));
            }
        }
    }

    // Build the Pareto front: ascending node count, strictly improving MSE.
    let mut pareto_front = Vec::new();
    let mut best_mse = f64::INFINITY;
    for (nodes, (m, expr)) in &archive {
        if *m < best_mse {
            best_mse = *m;
            pareto_front.push(ParetoMember {
                expression: expr.clone(),
                test_mse: *m,
                node_count: *nodes,
            });
        }
    }

    let (best_fitness, best_test_mse, best) = best_overall.expect("non-empty population");
    Ok(SRResult {
        pareto_front,
        best,
        best_fitness,
        best_test_mse,
        fitness_history,
    })
}
